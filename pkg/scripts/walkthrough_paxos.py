#!/usr/bin/env python3
"""Scripted 3-replica consensus walkthrough, printed step by step.

Replica 2 runs a leader election with replica 3 while replica 1 is cut
off, proposes its value, and the value decides; replica 1 then catches
up by merging. The last two steps demonstrate stability: a merge of
subsumed knowledge and a proposal on a decided state both leave every
replica untouched.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from prdt.protocols.paxos import Paxos
from prdt.protocols.voting import Membership
from prdt.sim import Execution, MergeAndUpkeep, Propose

IDS = ("id1", "id2", "id3")

STEPS = [
    ("replica 2 proposes val1 (opens a ballot)", Propose(1, "val1")),
    ("replica 3 merges replica 2", MergeAndUpkeep(1, 2)),
    ("replica 2 merges replica 3", MergeAndUpkeep(2, 1)),
    ("replica 2 proposes val1 (now leader)", Propose(1, "val1")),
    ("replica 3 merges replica 2", MergeAndUpkeep(1, 2)),
    ("replica 2 merges replica 3", MergeAndUpkeep(2, 1)),
    ("replica 1 merges replica 2", MergeAndUpkeep(1, 0)),
    ("replica 1 merges replica 3", MergeAndUpkeep(2, 0)),
    ("replica 1 proposes val2 (too late)", Propose(0, "val2")),
]


def main():
    protocol = Paxos(Membership(frozenset(IDS)))
    execution = Execution(protocol, IDS)
    for number, (label, step) in enumerate(STEPS, start=1):
        changed = execution.apply(step)
        print(f"Step {number}: {label}" + ("" if changed else "   [state unchanged]"))
        for slot, rid in enumerate(IDS):
            print(f"  {rid}: decision={execution.decisions[slot]!r}")
            print(f"       state={execution.states[slot]!r}")
        print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
