"""Consensus variants built by composing the single-decree protocol.

Each variant is a lattice combinator wrapped around ``PaxosState`` plus
one extra protocol action, ``nextDecision``, whose enabling query checks
that the present instance has decided:

* ``EpochPaxos``: an epoch counter around one instance; advancing
  discards the decided instance and starts fresh.
* ``MultiPaxos``: like EpochPaxos, but the new epoch's single round
  reuses a copy of the decided leader election, so the stable leader can
  propose immediately without a new phase 1.
* ``SequencePaxos``: a log of instances merged index-wise; a new entry
  may be appended only when every existing entry has decided.
* ``GenPaxos``: a map of named decisions, each carrying the set of
  predecessor decisions it depends on; independent decisions proceed
  concurrently.
* ``ReconfigurablePaxos``: each epoch pairs a value consensus with a
  membership consensus; the membership decided in epoch n is the quorum
  rule for epoch n+1.

Epoch-wrapped variants report decisions qualified by the epoch counter,
``Decided((counter, value))``: each epoch is its own consensus instance,
so outcomes of different epochs must never be compared as conflicting.
Within one epoch the decision is monotone; advancing the epoch resets it
by design (the wrapper deliberately forgets the decided instance), which
is exactly why the runtime snapshots decided values before advancing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .. import codec
from ..kernel import (
    Agreement,
    Consensus,
    Decided,
    INVALID,
    Invalid,
    ReplicaContext,
    UNDECIDED,
)
from ..lattice import Epoch, GrowSet, MergeList, MergeMap, ProductMixin
from .paxos import (
    BallotNum,
    Paxos,
    PaxosRound,
    PaxosState,
    decision as paxos_decision,
    upkeep as paxos_upkeep,
)
from .voting import Membership, decision as voting_decision


def leader_of(state: PaxosState, membership: Membership) -> Optional[str]:
    """The confirmed leader of the highest round that has one, if any."""
    for _, round_ in reversed(state.rounds.entries):
        d = voting_decision(round_.leader_election, membership)
        if isinstance(d, Decided):
            return d.value
    return None


class _EpochWrapped(Consensus):
    """Common plumbing for Epoch(counter, PaxosState) variants."""

    def __init__(self, membership: Membership):
        self.membership = membership
        self._inner = Paxos(membership)

    def bottom(self) -> Epoch:
        return Epoch(0, PaxosState.bottom())

    def inner_decision(self, state: Epoch) -> Agreement:
        """Outcome of the current epoch's instance, unqualified."""
        return paxos_decision(state.value, self.membership)

    def decision(self, state: Epoch) -> Agreement:
        d = self.inner_decision(state)
        if isinstance(d, Decided):
            return Decided((state.counter, d.value))
        return d

    def decision_instance(self, value):
        counter, _ = value
        return counter

    def propose(self, state: Epoch, value, ctx: ReplicaContext) -> Epoch:
        d = self.inner_decision(state)
        if isinstance(d, Invalid):
            return self.bottom()
        if isinstance(d, Decided):
            advanced = self.next_decision(state, ctx)
            inner = advanced.value.merge(self._inner.propose(advanced.value, value, ctx))
            return Epoch(advanced.counter, inner)
        delta = self._inner.propose(state.value, value, ctx)
        if delta == PaxosState.bottom():
            return self.bottom()
        return Epoch(state.counter, delta)

    def upkeep(self, state: Epoch, ctx: ReplicaContext, pending=None) -> Epoch:
        delta = paxos_upkeep(state.value, ctx, self.membership, pending)
        if delta == PaxosState.bottom():
            return self.bottom()
        return Epoch(state.counter, delta)

    def next_decision(self, state: Epoch, ctx: ReplicaContext) -> Epoch:
        raise NotImplementedError


class EpochPaxos(_EpochWrapped):
    """Repeated decisions; each epoch restarts from a blank instance."""

    def next_decision(self, state: Epoch, ctx: ReplicaContext) -> Epoch:
        if not isinstance(self.inner_decision(state), Decided):
            return self.bottom()
        return Epoch(state.counter + 1, PaxosState.bottom())


class MultiPaxos(_EpochWrapped):
    """Repeated decisions under a stable leader.

    Advancing copies the decided round's leader election into the new
    epoch's first round, keyed by a fresh ballot owned by that leader, so
    phase 2 is enabled there from the start.
    """

    def next_decision(self, state: Epoch, ctx: ReplicaContext) -> Epoch:
        inner = state.value
        deciding = None
        for ballot, round_ in reversed(inner.rounds.entries):
            if isinstance(voting_decision(round_.proposals, self.membership), Decided):
                deciding = (ballot, round_)
                break
        if deciding is None:
            return self.bottom()
        ballot, round_ = deciding
        top = 1 + max(b.counter for b, _ in inner.rounds.entries)
        seed = BallotNum(uid=ballot.uid, counter=top)
        seeded = PaxosState(
            MergeMap(((seed, PaxosRound(leader_election=round_.leader_election)),))
        )
        return Epoch(state.counter + 1, seeded)


@dataclass(frozen=True)
class GenOp(ProductMixin):
    """One named decision: its consensus instance and its dependencies."""

    consensus: PaxosState = PaxosState()
    predecessors: GrowSet = GrowSet()

    @classmethod
    def bottom(cls) -> "GenOp":
        return cls(PaxosState.bottom(), GrowSet.bottom())


class SequencePaxos(Consensus):
    """A replicated log: one instance per index, appended when all decided."""

    def __init__(self, membership: Membership):
        self.membership = membership
        self._inner = Paxos(membership)

    def bottom(self) -> MergeList:
        return MergeList.bottom()

    def index_decision(self, state: MergeList, index: int) -> Agreement:
        return paxos_decision(state[index], self.membership)

    def first_undecided(self, state: MergeList) -> Optional[int]:
        for i in range(len(state)):
            if self.index_decision(state, i) == UNDECIDED:
                return i
        return None

    def decision(self, state: MergeList) -> Agreement:
        """Invalid as soon as any entry is; otherwise the head entry's outcome."""
        for i in range(len(state)):
            if isinstance(self.index_decision(state, i), Invalid):
                return INVALID
        if not len(state):
            return UNDECIDED
        return self.index_decision(state, 0)

    def _at(self, index: int, delta: PaxosState) -> MergeList:
        return MergeList((PaxosState.bottom(),) * index + (delta,))

    def propose(self, state: MergeList, value, ctx: ReplicaContext) -> MergeList:
        index = self.first_undecided(state)
        if index is None:
            for i in range(len(state)):
                if isinstance(self.index_decision(state, i), Invalid):
                    return self.bottom()
            index = len(state)
            delta = self._inner.propose(PaxosState.bottom(), value, ctx)
        else:
            delta = self._inner.propose(state[index], value, ctx)
        if delta == PaxosState.bottom():
            return self.bottom()
        return self._at(index, delta)

    def upkeep(self, state: MergeList, ctx: ReplicaContext, pending=None) -> MergeList:
        index = self.first_undecided(state)
        if index is None:
            return self.bottom()
        delta = paxos_upkeep(state[index], ctx, self.membership, pending)
        if delta == PaxosState.bottom():
            return self.bottom()
        return self._at(index, delta)

    def next_decision(self, state: MergeList, ctx: ReplicaContext) -> MergeList:
        """Append a blank instance once every existing entry has decided."""
        for i in range(len(state)):
            if not isinstance(self.index_decision(state, i), Decided):
                return self.bottom()
        return MergeList((PaxosState.bottom(),) * len(state) + (PaxosState.bottom(),))

    def check_action_invariant(self, pre_state: MergeList, delta: MergeList, ctx: ReplicaContext) -> Optional[str]:
        """Prefix discipline at the acting replica: a delta may only touch
        index n when entries 0..n-1 of the actor's own state are decided."""
        for n in range(len(delta)):
            if delta[n] == PaxosState.bottom():
                continue
            if n > len(pre_state):
                return f"append at {n} skips {len(pre_state)}"
            for i in range(n):
                if not isinstance(self.index_decision(pre_state, i), Decided):
                    return f"vote at index {n} while index {i} undecided"
        return None


class GenPaxos(Consensus):
    """Named concurrent decisions ordered only by explicit dependencies."""

    def __init__(self, membership: Membership):
        self.membership = membership
        self._inner = Paxos(membership)

    def bottom(self) -> MergeMap:
        return MergeMap.bottom()

    def op_decision(self, state: MergeMap, uid) -> Agreement:
        return paxos_decision(state.get(uid).consensus, self.membership)

    def decision(self, state: MergeMap) -> Agreement:
        """Invalid as soon as any named decision is; never Decided.

        A map of independent outcomes has no single decided value, and
        reporting one (say, of the least uid) would flip as new names
        appear, breaking monotonicity. Per-name outcomes are read with
        ``op_decision``.
        """
        for _, op in state.entries:
            if isinstance(paxos_decision(op.consensus, self.membership), Invalid):
                return INVALID
        return UNDECIDED

    def fresh_uid(self, state: MergeMap, ctx: ReplicaContext) -> tuple:
        top = max((seq for rid, seq in state.keys() if rid == ctx.replica_id), default=0)
        return (ctx.replica_id, top + 1)

    def next_decision(self, state: MergeMap, predecessors: frozenset, ctx: ReplicaContext) -> MergeMap:
        """Open a fresh named decision depending on the given ones.

        Naming an unknown predecessor is a caller error, not a disabled
        action. The query: every named predecessor has decided.
        """
        for uid in predecessors:
            if uid not in state:
                raise ValueError(f"unknown predecessor {uid!r}")
        for uid in predecessors:
            if not isinstance(self.op_decision(state, uid), Decided):
                return self.bottom()
        fresh = self.fresh_uid(state, ctx)
        return MergeMap(((fresh, GenOp(PaxosState.bottom(), GrowSet(predecessors))),))

    def _undecided_uids(self, state: MergeMap):
        return [
            uid
            for uid, op in state.entries
            if paxos_decision(op.consensus, self.membership) == UNDECIDED
        ]

    def propose(self, state: MergeMap, value, ctx: ReplicaContext) -> MergeMap:
        """Drive the least-named undecided decision, opening one if none is.

        A fresh decision names every currently decided operation as its
        predecessor, so random runs build dependency chains.
        """
        undecided = self._undecided_uids(state)
        if undecided:
            uid = min(undecided)
            delta = self._inner.propose(state.get(uid).consensus, value, ctx)
            if delta == PaxosState.bottom():
                return self.bottom()
            return MergeMap(((uid, GenOp(delta, GrowSet.bottom())),))
        decided = frozenset(
            uid for uid, op in state.entries
            if isinstance(paxos_decision(op.consensus, self.membership), Decided)
        )
        fresh = self.fresh_uid(state, ctx)
        started = self._inner.propose(PaxosState.bottom(), value, ctx)
        return MergeMap(((fresh, GenOp(started, GrowSet(decided))),))

    def upkeep(self, state: MergeMap, ctx: ReplicaContext, pending=None) -> MergeMap:
        entries = []
        for uid in self._undecided_uids(state):
            delta = paxos_upkeep(state.get(uid).consensus, ctx, self.membership, pending)
            if delta != PaxosState.bottom():
                entries.append((uid, GenOp(delta, GrowSet.bottom())))
        if not entries:
            return self.bottom()
        return MergeMap(tuple(entries))


@dataclass(frozen=True)
class ConfigRound(ProductMixin):
    """One reconfiguration epoch: who votes, who votes next, and on what."""

    current_members: GrowSet = GrowSet()
    next_members: PaxosState = PaxosState()
    inner_consensus: PaxosState = PaxosState()

    @classmethod
    def bottom(cls) -> "ConfigRound":
        return cls(GrowSet.bottom(), PaxosState.bottom(), PaxosState.bottom())


class ReconfigurablePaxos(Consensus):
    """Value consensus whose membership is itself decided by consensus.

    Quorums come from the state's own ``current_members``, never from
    static configuration: the membership decided in epoch n becomes the
    quorum rule of epoch n+1. The genesis membership is installed by
    ``initial_state``; ``bottom`` stays a true neutral element with no
    members (under which nothing can decide).
    """

    def __init__(self, genesis: Membership):
        self.genesis = genesis

    def bottom(self) -> Epoch:
        return Epoch(0, ConfigRound.bottom())

    def initial_state(self) -> Epoch:
        return Epoch(0, ConfigRound(GrowSet(self.genesis.members)))

    def membership_of(self, state: Epoch) -> Optional[Membership]:
        members = state.value.current_members.elements
        return Membership(members) if members else None

    def inner_decision(self, state: Epoch) -> Agreement:
        m = self.membership_of(state)
        if m is None:
            return UNDECIDED
        d_members = paxos_decision(state.value.next_members, m)
        d_value = paxos_decision(state.value.inner_consensus, m)
        if isinstance(d_members, Invalid) or isinstance(d_value, Invalid):
            return INVALID
        return d_value

    def decision(self, state: Epoch) -> Agreement:
        d = self.inner_decision(state)
        if isinstance(d, Decided):
            return Decided((state.counter, d.value))
        return d

    def decision_instance(self, value):
        counter, _ = value
        return counter

    def _wrap_value(self, state: Epoch, delta: PaxosState) -> Epoch:
        if delta == PaxosState.bottom():
            return self.bottom()
        return Epoch(state.counter, ConfigRound(inner_consensus=delta))

    def _wrap_members(self, state: Epoch, delta: PaxosState) -> Epoch:
        if delta == PaxosState.bottom():
            return self.bottom()
        return Epoch(state.counter, ConfigRound(next_members=delta))

    def propose(self, state: Epoch, value, ctx: ReplicaContext) -> Epoch:
        """Drive the epoch forward: decide the value, then the membership
        (keeping it unchanged when nobody asked for a change), then open
        the next epoch and propose there."""
        m = self.membership_of(state)
        if m is None:
            return self.bottom()
        inner = Paxos(m)
        d_value = paxos_decision(state.value.inner_consensus, m)
        if isinstance(d_value, Invalid):
            return self.bottom()
        if d_value == UNDECIDED:
            return self._wrap_value(state, inner.propose(state.value.inner_consensus, value, ctx))
        d_members = paxos_decision(state.value.next_members, m)
        if isinstance(d_members, Invalid):
            return self.bottom()
        if d_members == UNDECIDED:
            unchanged = Membership(state.value.current_members.elements)
            return self._wrap_members(state, inner.propose(state.value.next_members, unchanged, ctx))
        advanced = self.next_decision(state, ctx)
        m_next = Membership(advanced.value.current_members.elements)
        delta = Paxos(m_next).propose(advanced.value.inner_consensus, value, ctx)
        return Epoch(advanced.counter, advanced.value.merge(ConfigRound(inner_consensus=delta)))

    def propose_membership(self, state: Epoch, members: Membership, ctx: ReplicaContext) -> Epoch:
        m = self.membership_of(state)
        if m is None:
            return self.bottom()
        return self._wrap_members(state, Paxos(m).propose(state.value.next_members, members, ctx))

    def upkeep(self, state: Epoch, ctx: ReplicaContext, pending=None) -> Epoch:
        m = self.membership_of(state)
        if m is None:
            return self.bottom()
        d_value = paxos_upkeep(state.value.inner_consensus, ctx, m, pending)
        d_members = paxos_upkeep(state.value.next_members, ctx, m, None)
        if d_value == PaxosState.bottom() and d_members == PaxosState.bottom():
            return self.bottom()
        return Epoch(state.counter, ConfigRound(next_members=d_members, inner_consensus=d_value))

    def next_decision(self, state: Epoch, ctx: ReplicaContext) -> Epoch:
        """Advance once both the value and the next membership are decided."""
        m = self.membership_of(state)
        if m is None:
            return self.bottom()
        d_members = paxos_decision(state.value.next_members, m)
        d_value = paxos_decision(state.value.inner_consensus, m)
        if not (isinstance(d_members, Decided) and isinstance(d_value, Decided)):
            return self.bottom()
        return Epoch(state.counter + 1, ConfigRound(GrowSet(d_members.value.members)))


codec.register(
    GenOp,
    "genop",
    lambda x: {"t": "genop", "c": codec.encode(x.consensus), "pred": codec.encode(x.predecessors)},
    lambda d: GenOp(codec.decode(d["c"]), codec.decode(d["pred"])),
)
codec.register(
    ConfigRound,
    "config",
    lambda x: {
        "t": "config",
        "cur": codec.encode(x.current_members),
        "next": codec.encode(x.next_members),
        "val": codec.encode(x.inner_consensus),
    },
    lambda d: ConfigRound(codec.decode(d["cur"]), codec.decode(d["next"]), codec.decode(d["val"])),
)
