"""Single-decree consensus as a grow-only map of ballot-numbered rounds.

The state is ``rounds: BallotNum -> PaxosRound`` where each round is a
product of two voting instances: ``leader_election`` (who leads this
ballot) and ``proposals`` (which value this ballot accepts). All four
phase actions return deltas; the knowledge a classic implementation
keeps in side registers (promises, accepted values) lives entirely in
the lattice:

* phase1a starts a fresh ballot, one higher than anything seen locally,
  and self-votes its leader election. Always enabled.
* phase1b confirms the candidate of the current (highest) ballot and, in
  the same delta, republishes the value this replica last accepted, so a
  confirmed leader provably knows every accepted value of its quorum.
* phase2a lets the confirmed leader vote a proposal: the value of the
  highest earlier ballot carrying any proposal vote, else its own.
* phase2b accepts the current ballot's proposal.

The promise of classic Paxos is implicit: a replica only ever acts on
its highest ballot, and states only grow, so confirming ballot b freezes
the replica out of all rounds below b forever.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, total_ordering
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
from ..lattice import MergeMap, ProductMixin
from .voting import Membership, VotingState, decision as voting_decision, leading_value


@total_ordering
@dataclass(frozen=True)
class BallotNum:
    """Round identifier, totally ordered by counter first, then owner id."""

    uid: str
    counter: int

    def __lt__(self, other: "BallotNum") -> bool:
        return (self.counter, self.uid) < (other.counter, other.uid)


@dataclass(frozen=True)
class PaxosRound(ProductMixin):
    leader_election: VotingState = VotingState()
    proposals: VotingState = VotingState()

    @classmethod
    def bottom(cls) -> "PaxosRound":
        return _ROUND_BOTTOM


_ROUND_BOTTOM = PaxosRound(VotingState.bottom(), VotingState.bottom())


@dataclass(frozen=True)
class PaxosState(ProductMixin):
    rounds: MergeMap = MergeMap()

    @classmethod
    def bottom(cls) -> "PaxosState":
        return _PAXOS_BOTTOM

    def current_ballot(self) -> Optional[BallotNum]:
        return self.rounds.max_key()


_PAXOS_BOTTOM = PaxosState(MergeMap())


def _single_round(ballot: BallotNum, round_: PaxosRound) -> PaxosState:
    return PaxosState(MergeMap(((ballot, round_),)))


def _has_voted(votes: VotingState, replica_id: str) -> bool:
    return any(v.voter == replica_id for v in votes.votes)


def _voted_value(votes: VotingState, replica_id: str):
    for v in votes.votes:
        if v.voter == replica_id:
            return v.value
    return None


def phase1a(state: PaxosState, ctx: ReplicaContext) -> PaxosState:
    """Open a new highest ballot owned by the local replica. Always enabled."""
    top = 1 + max((b.counter for b, _ in state.rounds.entries), default=0)
    ballot = BallotNum(uid=ctx.replica_id, counter=top)
    round_ = PaxosRound(
        leader_election=VotingState.of((ctx.replica_id, ctx.replica_id)),
        proposals=VotingState.bottom(),
    )
    return _single_round(ballot, round_)


def phase1b(state: PaxosState, ctx: ReplicaContext) -> PaxosState:
    """Confirm the current ballot's candidate, carrying the last accepted value.

    Enabled while the current round has a candidate and the local replica
    has not yet voted in its leader election. The returned delta bundles
    the confirmation with a republication of the most recent proposal
    value this replica accepted (scanned from its own state), so the two
    facts always travel together.
    """
    ballot = state.current_ballot()
    if ballot is None:
        return PaxosState.bottom()
    round_ = state.rounds.get(ballot)
    candidate = leading_value(round_.leader_election)
    if candidate is None or _has_voted(round_.leader_election, ctx.replica_id):
        return PaxosState.bottom()
    delta = {ballot: PaxosRound(leader_election=VotingState.of((ctx.replica_id, candidate)))}
    for promised, prior in reversed(state.rounds.entries):
        accepted = _voted_value(prior.proposals, ctx.replica_id)
        if accepted is not None:
            carried = PaxosRound(proposals=VotingState.of((ctx.replica_id, accepted)))
            existing = delta.get(promised)
            delta[promised] = carried if existing is None else existing.merge(carried)
            break
    return PaxosState(MergeMap(tuple(delta.items())))


def is_current_leader(state: PaxosState, membership: Membership, ctx: ReplicaContext) -> bool:
    ballot = state.current_ballot()
    if ballot is None:
        return False
    round_ = state.rounds.get(ballot)
    return _voting_decision_cached(round_.leader_election, membership) == Decided(ctx.replica_id)


def phase2a(state: PaxosState, my_value, ctx: ReplicaContext, membership: Membership) -> PaxosState:
    """Vote the leader's proposal into the current round.

    Enabled for the confirmed leader of the current ballot, once. The
    proposed value is taken from the highest earlier ballot that carries
    any proposal vote; only when no such ballot exists is the leader free
    to use its own value.
    """
    if not is_current_leader(state, membership, ctx):
        return PaxosState.bottom()
    ballot = state.current_ballot()
    round_ = state.rounds.get(ballot)
    if _has_voted(round_.proposals, ctx.replica_id):
        return PaxosState.bottom()
    value = my_value
    for prior_ballot, prior in reversed(state.rounds.entries):
        if prior_ballot == ballot:
            continue
        inherited = leading_value(prior.proposals)
        if inherited is not None:
            value = inherited
            break
    if value is None:
        return PaxosState.bottom()
    return _single_round(ballot, PaxosRound(proposals=VotingState.of((ctx.replica_id, value))))


def phase2b(state: PaxosState, ctx: ReplicaContext) -> PaxosState:
    """Accept the current round's proposal.

    Enabled while the current round has a proposal the local replica has
    not yet voted for.
    """
    ballot = state.current_ballot()
    if ballot is None:
        return PaxosState.bottom()
    round_ = state.rounds.get(ballot)
    if _has_voted(round_.proposals, ctx.replica_id):
        return PaxosState.bottom()
    value = leading_value(round_.proposals)
    if value is None:
        return PaxosState.bottom()
    return _single_round(ballot, PaxosRound(proposals=VotingState.of((ctx.replica_id, value))))


@lru_cache(maxsize=1 << 16)
def _voting_decision_cached(votes: VotingState, membership: Membership) -> Agreement:
    return voting_decision(votes, membership)


@lru_cache(maxsize=1 << 16)
def _round_decision(round_: PaxosRound, membership: Membership) -> Agreement:
    """Per-round outcome: Invalid if either component is, else the proposal vote."""
    le = _voting_decision_cached(round_.leader_election, membership)
    if isinstance(le, Invalid):
        return INVALID
    return _voting_decision_cached(round_.proposals, membership)


def decision(state: PaxosState, membership: Membership) -> Agreement:
    """Outcome over all rounds.

    Decided(v) if any round's proposals reach quorum on v; Invalid if any
    round's component voting is Invalid or two rounds decide differently;
    Undecided otherwise. Flagging cross-round disagreement (unreachable
    under the actions above) maximizes the oracle's strength.
    """
    outcome: Agreement = UNDECIDED
    for _, round_ in state.rounds.entries:
        d = _round_decision(round_, membership)
        if isinstance(d, Invalid):
            return INVALID
        if isinstance(d, Decided):
            if isinstance(outcome, Decided) and outcome.value != d.value:
                return INVALID
            outcome = d
    return outcome


def upkeep(state: PaxosState, ctx: ReplicaContext, membership: Membership, pending=None) -> PaxosState:
    """Apply the next useful phase for the current round, if any.

    The current round is handled by protocol stage: once it carries a
    proposal, accepting (phase2b) is the only step that adds knowledge;
    before that, a confirmed leader's step is proposing (phase2a, which
    needs an inherited or pending value); otherwise a follower confirms
    the candidate (phase1b). Upkeep never opens a new ballot: restarts
    are runtime policy, not protocol state.
    """
    ballot = state.current_ballot()
    if ballot is None:
        return PaxosState.bottom()
    round_ = state.rounds.get(ballot)
    if round_.proposals.votes:
        return phase2b(state, ctx)
    if is_current_leader(state, membership, ctx):
        return phase2a(state, pending, ctx, membership)
    return phase1b(state, ctx)


class Paxos(Consensus):
    """Consensus adapter for single-decree runs."""

    def __init__(self, membership: Membership):
        self.membership = membership

    def bottom(self) -> PaxosState:
        return PaxosState.bottom()

    def propose(self, state: PaxosState, value, ctx: ReplicaContext) -> PaxosState:
        """Start or drive a round for the given value.

        A replica that already leads the current round proposes directly;
        anyone else opens a fresh ballot. Once the state is decided (or
        poisoned) there is nothing left to propose.
        """
        if decision(state, self.membership) != UNDECIDED:
            return PaxosState.bottom()
        if is_current_leader(state, self.membership, ctx):
            return phase2a(state, value, ctx, self.membership)
        return phase1a(state, ctx)

    def decision(self, state: PaxosState) -> Agreement:
        return decision(state, self.membership)

    def upkeep(self, state: PaxosState, ctx: ReplicaContext, pending=None) -> PaxosState:
        return upkeep(state, ctx, self.membership, pending)


codec.register(
    BallotNum,
    "ballot",
    lambda x: {"t": "ballot", "uid": x.uid, "n": x.counter},
    lambda d: BallotNum(d["uid"], d["n"]),
)
codec.register(
    PaxosRound,
    "round",
    lambda x: {"t": "round", "le": codec.encode(x.leader_election), "prop": codec.encode(x.proposals)},
    lambda d: PaxosRound(codec.decode(d["le"]), codec.decode(d["prop"])),
)
codec.register(
    PaxosState,
    "paxos",
    lambda x: {"t": "paxos", "rounds": codec.encode(x.rounds)},
    lambda d: PaxosState(codec.decode(d["rounds"])),
)
