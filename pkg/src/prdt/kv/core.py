"""Transport-free server logic: one event in, a list of effects out.

The core owns the replicated state and is driven by three event kinds:
a client request, a peer envelope, and a clock tick. It never touches
sockets; effects say what to transmit. All state mutation happens on the
caller's single thread, so snapshots handed to effects are immutable
values and safe to serialize elsewhere.

The consensus instance is one epoch of a stable-leader protocol per log
entry. Because advancing an epoch discards the decided instance, the
decided operation is appended to the local log *before* the advance;
replicas that missed an epoch entirely detect the hole (epoch counter
ahead of log length) and recover the missing prefix via sync, which
carries the log alongside the state.

One client operation is serviced at a time, in arrival order. The head
operation is re-proposed every epoch until the log accepts it; a decided
epoch answers the client whose operation it holds. An election timer
restarts the ballot when the head operation makes no progress.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, List, Optional

from .. import codec
from ..kernel import Decided, Invalid, ReplicaContext, UNDECIDED
from ..protocols.paxos import phase1a
from ..protocols.variants import MultiPaxos
from ..protocols.voting import Membership
from ..lattice import Epoch
from . import wire
from .wire import Write


@dataclass(frozen=True)
class SendToPeer:
    peer: str
    envelope: dict


@dataclass(frozen=True)
class Respond:
    request_id: Any
    response: dict


class ServerCore:
    def __init__(self, uid: str, peer_ids, election_timeout: float = 0.5):
        self.uid = uid
        self.peers = tuple(peer_ids)
        self.ctx = ReplicaContext(uid)
        self.membership = Membership(frozenset((uid,) + self.peers))
        self.protocol = MultiPaxos(self.membership)
        self.state = self.protocol.bottom()
        self.decided_ops: List = []
        self.pending = deque()
        self.now = 0.0
        self.election_timeout = election_timeout
        self.election_deadline: Optional[float] = None
        self._last_proposal_key = None
        # Join of the deltas generated while handling the current event;
        # flushed as one envelope per peer when the handler returns. The
        # join of deltas is itself a delta, so coalescing is free.
        self._outgoing = self.protocol.bottom()
        self._decision_memo = None

    # -- events ------------------------------------------------------

    def on_client_request(self, request_id, frame: dict) -> List:
        effects: List = []
        try:
            op = wire.parse_request(frame)
        except (ValueError, KeyError, TypeError):
            effects.append(Respond(request_id, wire.error_response("bad request")))
            return effects
        self.pending.append((request_id, op))
        self._drive(effects)
        return self._flush(effects)

    def on_envelope(self, frame: dict) -> List:
        effects: List = []
        try:
            envelope = wire.parse_envelope(frame)
            sender = envelope["sender"]
            kind = envelope["kind"]
            if kind == wire.DELTA:
                delta = codec.decode(envelope["payload"])
                self._absorb(delta, sender, effects)
            elif kind == wire.SYNC_REQUEST:
                effects.append(SendToPeer(
                    sender,
                    wire.sync_response_envelope(self.uid, self.state, self.decided_ops),
                ))
            elif kind == wire.SYNC_RESPONSE:
                payload = envelope["payload"]
                self._adopt_log([codec.decode(doc) for doc in payload["log"]], effects)
                self._absorb(codec.decode(payload["state"]), sender, effects)
        except (ValueError, KeyError, TypeError):
            # Malformed frames are dropped; the connection stays up and
            # any lost knowledge is recovered by a later sync.
            pass
        return self._flush(effects)

    def on_peer_connected(self, peer: str) -> List:
        # Full state is a valid delta, so pushing it plus requesting the
        # peer's own repairs both directions after a reconnect.
        return [
            SendToPeer(peer, wire.sync_request_envelope(self.uid)),
            SendToPeer(peer, wire.delta_envelope(self.uid, self.state)),
        ]

    def on_tick(self, now: float) -> List:
        self.now = now
        effects: List = []
        if self.pending and self.election_deadline is not None and now >= self.election_deadline:
            restart = Epoch(self.state.counter, phase1a(self.state.value, self.ctx))
            self._apply_local(restart)
            self._reset_election()
            self._after_state_change(effects)
        return self._flush(effects)

    # -- internals ---------------------------------------------------

    def _head_op(self):
        return self.pending[0][1] if self.pending else None

    def _inner_decision(self):
        # states are immutable, so identity is a sound memo key
        memo = self._decision_memo
        if memo is not None and memo[0] is self.state:
            return memo[1]
        decision = self.protocol.inner_decision(self.state)
        self._decision_memo = (self.state, decision)
        return decision

    def _reset_election(self) -> None:
        self.election_deadline = self.now + self.election_timeout

    def _apply_local(self, delta) -> bool:
        """Merge a locally produced delta and queue it for dissemination;
        bottom is silent."""
        if delta == self.protocol.bottom():
            return False
        merged = self.protocol.merge(self.state, delta)
        if merged == self.state:
            return False
        self.state = merged
        self._outgoing = self.protocol.merge(self._outgoing, delta)
        return True

    def _flush(self, effects: List) -> List:
        """Emit the event's accumulated delta, one envelope per peer."""
        out = self._outgoing
        if out != self.protocol.bottom():
            self._outgoing = self.protocol.bottom()
            envelope = wire.delta_envelope(self.uid, out)
            for peer in self.peers:
                effects.append(SendToPeer(peer, envelope))
        return effects

    def _absorb(self, incoming, sender: str, effects: List) -> None:
        """Merge peer knowledge, then take our next protocol step."""
        if not isinstance(incoming, Epoch):
            # decodable JSON, wrong state type: not ours to merge
            raise ValueError(f"expected a replicated state, got {incoming!r}")
        merged = self.protocol.merge(self.state, incoming)
        if merged != self.state:
            self.state = merged
        if self.state.counter > len(self.decided_ops):
            # The merge jumped past an epoch we never saw decided.
            effects.append(SendToPeer(sender, wire.sync_request_envelope(self.uid)))
        self._after_state_change(effects)

    def _after_state_change(self, effects: List) -> None:
        up = self.protocol.upkeep(self.state, self.ctx, pending=self._head_op())
        self._apply_local(up)
        self._advance(effects)
        self._drive(effects)

    def _adopt_log(self, their_log: List, effects: List) -> None:
        if len(their_log) <= len(self.decided_ops):
            return
        for op in their_log[len(self.decided_ops):]:
            self._append_decided(op, effects)

    def _append_decided(self, op, effects: List) -> None:
        index = len(self.decided_ops)
        self.decided_ops.append(op)
        if self.pending and self.pending[0][1] == op:
            request_id, _ = self.pending.popleft()
            effects.append(Respond(request_id, self._response_for(op, index)))
            self._last_proposal_key = None
            self.election_deadline = None

    def _response_for(self, op, index: int) -> dict:
        if isinstance(op, Write):
            return wire.ok_response()
        for prior in reversed(self.decided_ops[:index]):
            if isinstance(prior, Write) and prior.key == op.key:
                return wire.ok_response(prior.value)
        return wire.not_found_response()

    def _advance(self, effects: List) -> None:
        """Snapshot every decided epoch into the log, then open the next one."""
        while True:
            d = self._inner_decision()
            if isinstance(d, Invalid):
                raise AssertionError("replicated state became Invalid")
            if not isinstance(d, Decided):
                return
            if self.state.counter > len(self.decided_ops):
                # Hole below the current epoch: wait for sync to fill it
                # before appending, or indices would lie.
                return
            if self.state.counter == len(self.decided_ops):
                self._append_decided(d.value, effects)
            advance = self.protocol.next_decision(self.state, self.ctx)
            # The advance delta discards this epoch when joined, so any
            # not-yet-sent evidence that decided it must ship first as
            # its own envelope or peers would see a hole.
            self._flush(effects)
            if not self._apply_local(advance):
                return

    def _drive(self, effects: List) -> None:
        """Propose the head operation once per (epoch, head)."""
        if not self.pending:
            self.election_deadline = None
            return
        if self._inner_decision() != UNDECIDED:
            # Decided but hole-blocked: proposing would advance the epoch
            # past a value not yet snapshotted. Wait for sync.
            return
        op = self.pending[0][1]
        key = (self.state.counter, self.pending[0][0])
        if self._last_proposal_key == key:
            return
        self._last_proposal_key = key
        if self.election_deadline is None:
            self._reset_election()
        delta = self.protocol.propose(self.state, op, self.ctx)
        if self._apply_local(delta):
            self._advance(effects)
