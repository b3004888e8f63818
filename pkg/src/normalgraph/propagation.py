"""Belief propagation on cycle-free normal-form graphs.

Every variable (edge) carries two messages: a forward one emitted by its
producing node and a backward one emitted by its consumer.  The update
rules are local:

* a SISO block with matrix theta maps forward input f to ``theta' f`` and
  backward output b to ``theta b``;
* an equality node sends along each edge the elementwise product of the
  messages entering on all other edges;
* open endpoints receive the evidence factor, or uniform when there is
  none.

On a cycle-free graph each message is fully determined, so the engine
compiles a dependency-ordered schedule and computes every message exactly
once.  A flooding mode (Jacobi sweeps from an arbitrary initial state) is
kept for demonstration; after as many rounds as the longest dependency
chain it reproduces the exact result.

Message arrays are (n_samples, alphabet) so a whole dataset propagates in
one vectorized pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .graph import (
    DiverterNode,
    GraphSpec,
    GraphError,
    SisoBlock,
    SourceBlock,
    UnknownVariable,
    ensure_valid,
)
from .messages import AllZeroVector, hadamard_posterior, normalize, one_hot

__all__ = [
    "ContradictoryEvidence",
    "MessageState",
    "Propagator",
    "propagate",
    "posterior",
    "siso_forward",
    "siso_backward",
    "diverter_out",
    "aggregated_log_likelihood",
    "block_log_likelihood",
    "message_depth",
]


class ContradictoryEvidence(ValueError):
    """Injected evidence has no support under the current parameters."""


def siso_forward(theta: np.ndarray, forward_in: np.ndarray) -> np.ndarray:
    """Forward message through a block: normalize(theta' f)."""
    theta = np.asarray(theta, dtype=np.float64)
    return normalize(np.asarray(forward_in, dtype=np.float64) @ theta)


def siso_backward(theta: np.ndarray, backward_out: np.ndarray) -> np.ndarray:
    """Backward message through a block: normalize(theta b)."""
    theta = np.asarray(theta, dtype=np.float64)
    return normalize(np.asarray(backward_out, dtype=np.float64) @ theta.T)


def diverter_out(forward_in: np.ndarray, backwards: Sequence[np.ndarray]):
    """Messages leaving an equality node with one inbound replica.

    Given the forward message on the inbound edge and the backward messages
    on the D taps, returns ``(backward_in, forwards)``: the backward message
    sent up the inbound edge and the forward message sent down each tap.
    """
    entering = [np.asarray(forward_in, dtype=np.float64)]
    entering += [np.asarray(b, dtype=np.float64) for b in backwards]
    leaving = _equality_leaving(entering)
    return leaving[0], leaving[1:]


def _equality_leaving(entering: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Per edge, the normalized product of the other entering messages."""
    out = []
    for k in range(len(entering)):
        prod = None
        for j, msg in enumerate(entering):
            if j == k:
                continue
            prod = msg.copy() if prod is None else prod * msg
        if prod is None:
            raise GraphError("equality node needs at least two edges")
        try:
            out.append(normalize(prod))
        except AllZeroVector as exc:
            raise AllZeroVector(f"contradictory replica messages at edge {k}") from exc
    return out


# ---------------------------------------------------------------------------
# Compiled propagation


@dataclass(frozen=True)
class MessageState:
    """All messages of one propagation pass, stacked over samples.

    ``forward[v]`` and ``backward[v]`` are (n_samples, size(v)) arrays of
    normalized messages.
    """

    forward: dict[str, np.ndarray]
    backward: dict[str, np.ndarray]
    n_samples: int


def posterior(state: MessageState, variable: str) -> np.ndarray:
    """Normalized elementwise product of the stored message pair."""
    if variable not in state.forward:
        raise UnknownVariable(f"unknown variable {variable!r}")
    return hadamard_posterior(state.forward[variable], state.backward[variable])


class Propagator:
    """Reusable schedule for one graph structure.

    Compiling the schedule validates the graph once; ``run`` may then be
    called many times with different evidence or parameter overrides, which
    is what the training loop does every epoch.
    """

    def __init__(self, graph: GraphSpec):
        ensure_valid(graph)
        self.graph = graph
        self.sizes = graph.sizes
        self._tails = graph.tails()
        self._heads = graph.heads()
        self._compile()

    # Slots are ("F"|"B", variable); rules are small tagged tuples.
    def _compile(self) -> None:
        rules: dict[tuple[str, str], tuple] = {}
        deps: dict[tuple[str, str], list] = {}
        for var, _ in self.graph.variables:
            tail = self._tails.get(var)
            slot = ("F", var)
            if tail is None:
                rules[slot], deps[slot] = ("evidence",), []
            elif isinstance(tail, SourceBlock):
                rules[slot], deps[slot] = ("prior", tail.name), []
            elif isinstance(tail, SisoBlock):
                rules[slot] = ("siso_f", tail.name)
                deps[slot] = [("F", tail.from_var)]
            else:
                rules[slot] = ("product", self._other_entering(tail, var))
                deps[slot] = rules[slot][1]

            head = self._heads.get(var)
            slot = ("B", var)
            if head is None:
                rules[slot], deps[slot] = ("evidence",), []
            elif isinstance(head, SisoBlock):
                rules[slot] = ("siso_b", head.name)
                deps[slot] = [("B", head.to_var)]
            else:
                rules[slot] = ("product", self._other_entering(head, var))
                deps[slot] = rules[slot][1]

        # Deterministic topological order over message slots.
        remaining = dict(deps)
        order: list[tuple[str, str]] = []
        depth: dict[tuple[str, str], int] = {}
        while remaining:
            ready = sorted(s for s, d in remaining.items() if all(x not in remaining for x in d))
            if not ready:
                raise GraphError("message schedule has a dependency cycle")
            for slot in ready:
                depth[slot] = 1 + max((depth[d] for d in deps[slot]), default=0)
                order.append(slot)
                del remaining[slot]
        self._rules = rules
        self._order = order
        self.depth = max(depth.values(), default=0)

    @staticmethod
    def _other_entering(div: DiverterNode, edge: str) -> list[tuple[str, str]]:
        slots = [("F", v) for v in div.inbound if v != edge]
        slots += [("B", v) for v in div.taps if v != edge]
        return slots

    # -- evidence handling --------------------------------------------------

    def _canonical_evidence(self, evidence: Mapping | None, n_samples: int | None):
        evidence = dict(evidence or {})
        terminals = set(self.graph.terminals())
        n = n_samples
        canon: dict[str, np.ndarray] = {}
        for var, value in evidence.items():
            if var not in self.sizes:
                raise UnknownVariable(f"evidence for unknown variable {var!r}")
            if var not in terminals:
                raise GraphError(
                    f"evidence at non-terminal variable {var!r}; split it first"
                )
            arr = np.asarray(value)
            if arr.ndim == 0 or (arr.ndim == 1 and np.issubdtype(arr.dtype, np.integer)):
                rows = 1 if arr.ndim == 0 else arr.shape[0]
            elif arr.ndim == 1:
                rows = 1
            elif arr.ndim == 2:
                rows = arr.shape[0]
            else:
                raise ValueError(f"evidence for {var!r} has too many dimensions")
            if rows > 1:
                if n is None:
                    n = rows
                elif n != rows:
                    raise ValueError(
                        f"evidence for {var!r} has {rows} samples, expected {n}"
                    )
            canon[var] = arr
        return canon, (1 if n is None else n)

    def _evidence_factor(self, var: str, value, n: int) -> np.ndarray:
        size = self.sizes[var]
        if value is None:
            return np.full((n, size), 1.0 / size)
        arr = np.asarray(value)
        if arr.ndim == 0 or (arr.ndim == 1 and np.issubdtype(arr.dtype, np.integer)):
            idx = np.broadcast_to(arr.astype(np.int64).reshape(-1), (n,))
            if np.any(idx < 0) or np.any(idx >= size):
                raise ValueError(f"evidence symbol out of range for variable {var!r}")
            return one_hot(idx, size)
        soft = np.asarray(arr, dtype=np.float64)
        if soft.ndim == 1:
            soft = np.broadcast_to(soft, (n, size))
        if soft.shape != (n, size):
            raise ValueError(f"evidence for {var!r} has shape {soft.shape}, expected {(n, size)}")
        try:
            return normalize(soft)
        except AllZeroVector as exc:
            raise ContradictoryEvidence(f"all-zero soft evidence at {var!r}") from exc

    # -- execution -----------------------------------------------------------

    def _parameters(self, overrides: Mapping[str, np.ndarray] | None) -> dict[str, np.ndarray]:
        params = {s.name: s.prior for s in self.graph.sources}
        params.update({b.name: b.theta for b in self.graph.blocks})
        for name, value in (overrides or {}).items():
            if name not in params:
                raise GraphError(f"parameter override for unknown node {name!r}")
            value = np.asarray(value, dtype=np.float64)
            if value.shape != params[name].shape:
                raise GraphError(f"override for {name!r} has shape {value.shape}")
            params[name] = value
        return params

    def _apply(self, slot, rule, msgs, factors, params, n) -> np.ndarray:
        kind = rule[0]
        if kind == "evidence":
            return factors[slot]
        if kind == "prior":
            return np.tile(params[rule[1]], (n, 1))
        if kind == "siso_f":
            blk = self.graph.block(rule[1])
            raw = msgs[("F", blk.from_var)] @ params[blk.name]
        elif kind == "siso_b":
            blk = self.graph.block(rule[1])
            raw = msgs[("B", blk.to_var)] @ params[blk.name].T
        else:
            raw = None
            for dep in rule[1]:
                raw = msgs[dep].copy() if raw is None else raw * msgs[dep]
        return self._checked(raw, slot)

    @staticmethod
    def _checked(raw: np.ndarray, slot) -> np.ndarray:
        sums = raw.sum(axis=-1, keepdims=True)
        bad = np.where(sums[:, 0] == 0.0)[0]
        if bad.size:
            direction = "forward" if slot[0] == "F" else "backward"
            raise ContradictoryEvidence(
                f"no consistent {direction} message at variable {slot[1]!r} "
                f"for sample(s) {bad[:5].tolist()}"
            )
        return raw / sums

    def run(
        self,
        evidence: Mapping | None = None,
        n_samples: int | None = None,
        parameters: Mapping[str, np.ndarray] | None = None,
        flooding_rounds: int | None = None,
        init: MessageState | None = None,
    ) -> MessageState:
        """Propagate evidence and return the complete message state.

        ``parameters`` overrides block matrices or source priors by node
        name without rebuilding the schedule.  ``flooding_rounds`` switches
        to Jacobi flooding from ``init`` (or uniform) instead of the exact
        one-pass sweep.
        """
        canon, n = self._canonical_evidence(evidence, n_samples)
        params = self._parameters(parameters)
        factors = {}
        for slot, rule in self._rules.items():
            if rule[0] == "evidence":
                factors[slot] = self._evidence_factor(slot[1], canon.get(slot[1]), n)

        if flooding_rounds is None:
            msgs: dict[tuple[str, str], np.ndarray] = {}
            for slot in self._order:
                msgs[slot] = self._apply(slot, self._rules[slot], msgs, factors, params, n)
        else:
            msgs = {}
            for slot in self._order:
                if init is not None:
                    store = init.forward if slot[0] == "F" else init.backward
                    msgs[slot] = np.array(store[slot[1]], dtype=np.float64)
                else:
                    size = self.sizes[slot[1]]
                    msgs[slot] = np.full((n, size), 1.0 / size)
            for _ in range(flooding_rounds):
                msgs = {
                    slot: self._apply(slot, self._rules[slot], msgs, factors, params, n)
                    for slot in self._order
                }
        return self._to_state(msgs, n)

    def initial_state(self, evidence: Mapping | None = None, n_samples: int | None = None,
                      rng: np.random.Generator | None = None) -> MessageState:
        """Unpropagated state: evidence factors in place, everything else
        uniform, or independent uniform-random draws when ``rng`` is given."""
        canon, n = self._canonical_evidence(evidence, n_samples)
        msgs = {}
        for slot, rule in self._rules.items():
            if rule[0] == "evidence":
                msgs[slot] = self._evidence_factor(slot[1], canon.get(slot[1]), n)
            else:
                size = self.sizes[slot[1]]
                if rng is None:
                    msgs[slot] = np.full((n, size), 1.0 / size)
                else:
                    msgs[slot] = normalize(rng.uniform(size=(n, size)))
        return self._to_state(msgs, n)

    @staticmethod
    def _to_state(msgs, n) -> MessageState:
        forward = {}
        backward = {}
        for (direction, var), arr in msgs.items():
            arr = np.asarray(arr)
            arr.setflags(write=False)
            (forward if direction == "F" else backward)[var] = arr
        return MessageState(forward=forward, backward=backward, n_samples=n)


def propagate(graph: GraphSpec, evidence: Mapping | None = None,
              n_samples: int | None = None, **kwargs) -> MessageState:
    """One-shot propagation; see Propagator.run for the knobs."""
    return Propagator(graph).run(evidence, n_samples=n_samples, **kwargs)


def message_depth(graph: GraphSpec) -> int:
    """Longest dependency chain; flooding needs this many rounds to settle."""
    return Propagator(graph).depth


def aggregated_log_likelihood(state: MessageState, terminals: Sequence[str],
                              mask: np.ndarray | None = None) -> float:
    """Sum over terminals and samples of log of the message pair overlap.

    Hard evidence makes each term the log-probability the rest of the
    graph assigns to the observed symbol.  Returns -inf when any selected
    sample has an impossible evidence combination.
    """
    total = 0.0
    sel = None if mask is None else np.asarray(mask, dtype=bool)
    for var in terminals:
        if var not in state.forward:
            raise UnknownVariable(f"unknown terminal {var!r}")
        overlap = np.sum(state.forward[var] * state.backward[var], axis=-1)
        if sel is not None:
            overlap = overlap[sel]
        if np.any(overlap <= 0.0):
            return float("-inf")
        total += float(np.sum(np.log(overlap)))
    return total


def block_log_likelihood(theta: np.ndarray, data) -> float:
    """Masked log-likelihood of one block against its incident messages.

    ``data`` is anything with normalized (n, M_in) ``forward``, (n, M_out)
    ``backward`` and 0/1 ``mask`` arrays, such as a BlockDataset.  The per
    sample score is f' theta b; -inf is returned if any selected sample
    scores zero.
    """
    f, b, mask = data.forward, data.backward, data.mask
    theta = np.asarray(theta, dtype=np.float64)
    scores = np.einsum("nl,lm,nm->n", f, theta, b)
    sel = mask > 0
    if np.any(scores[sel] <= 0.0):
        return float("-inf")
    out = 0.0
    if np.any(sel):
        out = float(np.sum(np.log(scores[sel])))
    return out
