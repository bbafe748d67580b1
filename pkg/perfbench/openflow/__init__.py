"""OpenFlow 1.0 codec and data model."""

from .codec import Framer, decode, encode, frame_stream, split_frames
from .types import MsgType, OfHeader, OfMessage

__all__ = [
    "Framer",
    "MsgType",
    "OfHeader",
    "OfMessage",
    "decode",
    "encode",
    "frame_stream",
    "split_frames",
]
