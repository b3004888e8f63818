"""Build a small graph by hand, push evidence through it, read posteriors.

The model is a four-state hidden cause S with three observed children.
Messages travel once forward and once backward along each edge; the
normalized product of the two directions is the posterior.
"""

import numpy as np

from normalgraph.experiments import build_latent_star
from normalgraph.graph import split_variable
from normalgraph.propagation import Propagator, posterior


def show(label, vector):
    cells = " ".join(f"{v:8.5f}" for v in np.atleast_1d(vector))
    print(f"  {label:>14}  [{cells}]")


def main():
    star = build_latent_star(generative=True)
    print("terminals:", star.terminals())

    print("\nno evidence: posteriors reduce to the model's marginals")
    state = Propagator(star).run({}, n_samples=1)
    for v in ("S0", "X1", "X2", "X3"):
        show(v, posterior(state, v)[0])

    print("\nall three children observed at their first symbol")
    state = Propagator(star).run(
        {"X1": np.array([0]), "X2": np.array([0]), "X3": np.array([0])},
        n_samples=1,
    )
    show("S0", posterior(state, "S0")[0])
    exact = np.array([10.0, 297.0, 3600.0, 60.0]) / 3967.0
    show("by hand", exact)
    print("  max difference:", np.max(np.abs(posterior(state, "S0")[0] - exact)))

    # A non-terminal can be observed after splitting it into a
    # continuation edge plus an evidence tap.
    tapped = split_variable(star, "S0")
    print("\nafter split_variable(star, 'S0'), terminals:", tapped.terminals())
    state = Propagator(tapped).run(
        {"S0_tap": np.array([2]), "X2": np.array([1])}, n_samples=1
    )
    show("X1 | S=2, X2=1", posterior(state, "X1")[0])
    show("row of P(X1|S)", star.block("P_X1").theta[2])

    # Batched evidence: one propagation covers all samples at once.
    state = Propagator(star).run({"X3": np.array([0, 1, 2])}, n_samples=3)
    print("\nposterior of S0 for each of the three X3 symbols:")
    for n in range(3):
        show(f"X3={n}", posterior(state, "S0")[n])


if __name__ == "__main__":
    main()
