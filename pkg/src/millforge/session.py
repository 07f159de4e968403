"""One two-party protocol session: paired tapes plus one instrumented channel."""

from __future__ import annotations

from .bits import Role
from .tape import TapeSeed, derive_pair
from .transport import ChannelStats, dump_transcript, open_session, run_parties


class Session:
    def __init__(self, seed: TapeSeed | int = 0, *, scheduler: str = "threads", keep_records: bool = True):
        if not isinstance(seed, TapeSeed):
            seed = TapeSeed.from_int(seed)
        self.seed = seed
        self.scheduler = scheduler
        self.sender_tape, self.receiver_tape = derive_pair(seed, keep_records=keep_records)
        self.sender_ep, self.receiver_ep = open_session()

    def tape(self, role: Role):
        return self.sender_tape if role is Role.SENDER else self.receiver_tape

    def run(self, sender_routine, receiver_routine):
        return run_parties(self.sender_ep, sender_routine, self.receiver_ep, receiver_routine,
                           scheduler=self.scheduler)

    @property
    def stats(self) -> ChannelStats:
        return self.sender_ep.stats

    def transcript(self):
        return self.sender_ep.channel.transcript()

    def transcript_bytes(self) -> bytes:
        return dump_transcript(self.transcript())
