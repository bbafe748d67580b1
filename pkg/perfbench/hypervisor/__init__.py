"""Behavioral hypervisor proxies: transparent slicing (fv) and translating (ovx)."""

from .flowspace import Flowspace, FlowspaceRule, fv_forward_down, fv_forward_up
from .proxy import HypervisorProxy, ProxyConfig, ProxyMode, serve_proxy
from .translation import (
    MappingTable,
    StatsCache,
    VirtualMapping,
    ovx_stats_cache,
    ovx_translate_down,
    ovx_translate_up,
)

__all__ = [
    "Flowspace",
    "FlowspaceRule",
    "HypervisorProxy",
    "MappingTable",
    "ProxyConfig",
    "ProxyMode",
    "StatsCache",
    "VirtualMapping",
    "fv_forward_down",
    "fv_forward_up",
    "ovx_stats_cache",
    "ovx_translate_down",
    "ovx_translate_up",
    "serve_proxy",
]
