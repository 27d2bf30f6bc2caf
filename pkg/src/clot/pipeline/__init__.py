"""Closed-loop teleoperation harness: wire codec, transport, scheduler, loop and training env."""

from .loop import (
    ClipSource,
    LoopConfig,
    MailboxSource,
    PolicyAction,
    ReferenceFollower,
    ReferenceStep,
    RunReport,
    reference_follower_policy,
    run_closed_loop,
)
from .scheduler import RateConfig
from .wire import WireError, WireFrame, decode_frame, encode_frame
