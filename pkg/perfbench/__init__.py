"""perfbench: OpenFlow control-plane benchmark for multi-tenant SDN hypervisors."""

import logging

__version__ = "0.1.0"

log = logging.getLogger("perfbench")
