"""Moment-based hardness verdicts for a few teacher directions.

For each direction the classifier searches the moment functionals
E[f(z)^k <u, z>] up to a power cap; the first nonzero one certifies the
direction is reachable by reusing batches, while exact symmetries
(evenness, or reflection of one direction holding the rest fixed)
certify it is not.  Prints the verdict JSON fields that matter, one
direction per line.
"""

import json

from batchreuse.hardness import Direction, classify_direction
from batchreuse.targets import named_target

CASES = [
    ("he3", [1.0]),
    ("he4", [1.0]),
    ("staircase3", [0.0, 1.0, 0.0]),
    ("product123_plus_he3", [0.0, 0.0, 0.0, 1.0]),
    ("product123_plus_he3", [1.0, 0.0, 0.0, 0.0]),
    ("committee_relu2", [-1.0, 1.0]),
]


def main() -> None:
    print(f"{'teacher':<22}{'direction':<22}{'status':<18}first nonzero power")
    for name, coeffs in CASES:
        target = named_target(name)
        direction = Direction.unit(coeffs, name=str(coeffs))
        verdict = json.loads(classify_direction(target, direction).to_json())
        first = verdict["witness_k"] if verdict["witness_k"] is not None else "-"
        label = ",".join(f"{c:g}" for c in coeffs)
        print(f"{name:<22}{label:<22}{verdict['status']:<18}{first}")
    print()
    print("'-' means every probed moment vanished; for the committee the")
    print("antisymmetric direction is ruled out by an exact symmetry rather")
    print("than by sampling noise.")


if __name__ == "__main__":
    main()
