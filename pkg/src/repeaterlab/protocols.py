"""Markov chain models of repeater-link entanglement distribution protocols.

Three protocol families are modeled, each as a small transition matrix over
protocol phases with a designated failure (restart) state and success state:

* multiheralded EG: a single link needs n consecutive heralded rounds; any
  round failure restarts the sequence. State i counts rounds passed, state n
  is success. n=1 is plain single-heralded generation; n=2 is the
  double-heralded scheme.
* shs: two adjacent links each run single-heralded EG in parallel; once both
  hold a pair, one swap attempt (one step, success probability swap_prob)
  merges them end to end. States label which links hold a pair.
* dhs: same two-link layout, but each link needs two heralding rounds; states
  label per-link round progress (0, 1, or 2 = pair ready).

The success-state row always equals the failure-state row: after delivering
a pair the protocol restarts exactly as after a failure. Closed-form results
are expressed in step units; tau (seconds per step) lives on ProtocolChain
and is applied by the estimators module.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import markov
from .markov import StochasticMatrix


class ProtocolError(ValueError):
    """Base class for protocol parameter and construction errors."""


class EmptyRoundsError(ProtocolError):
    """Multiheralded protocol needs at least one round."""


class ProbabilityRangeError(ProtocolError):
    def __init__(self, name, value):
        super().__init__(f"{name} = {value!r} outside [0, 1]")
        self.name = name
        self.value = value


class HeraldCountError(ProtocolError):
    """left/right herald probability lists have the wrong length."""


class ZeroProbabilityError(ProtocolError):
    """A closed form diverges because some probability is zero."""


class DegenerateChainError(ProtocolError):
    """Parameters put the chain in a 0/0 corner (both links dead)."""


def _check_prob(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ProbabilityRangeError(name, value)
    return float(value)


@dataclass(frozen=True)
class MultiHeraldParams:
    """Per-round success probabilities p1..pn of an n-round heralded link."""

    round_probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.round_probs)
        if len(probs) == 0:
            raise EmptyRoundsError("round_probs must list at least one round")
        for i, p in enumerate(probs):
            _check_prob(f"round_probs[{i}]", p)
        object.__setattr__(self, "round_probs", probs)

    @property
    def n(self) -> int:
        return len(self.round_probs)


@dataclass(frozen=True)
class TwoLinkParams:
    """Two-link swap protocol parameters.

    left_probs/right_probs hold one entry per heralding round of that link:
    length 1 for the single-heralded scheme, 2 for the double-heralded one.
    swap_prob is the swap success probability once both links are ready.
    """

    left_probs: tuple[float, ...]
    right_probs: tuple[float, ...]
    swap_prob: float

    def __post_init__(self):
        left = tuple(float(p) for p in self.left_probs)
        right = tuple(float(p) for p in self.right_probs)
        if len(left) != len(right) or len(left) not in (1, 2):
            raise HeraldCountError(
                f"left/right prob lists must both have length 1 or 2, "
                f"got {len(left)} and {len(right)}")
        for i, p in enumerate(left):
            _check_prob(f"left_probs[{i}]", p)
        for i, p in enumerate(right):
            _check_prob(f"right_probs[{i}]", p)
        object.__setattr__(self, "left_probs", left)
        object.__setattr__(self, "right_probs", right)
        object.__setattr__(self, "swap_prob", _check_prob("swap_prob", self.swap_prob))


@dataclass(frozen=True)
class ProtocolChain:
    """A protocol's transition matrix with its state labels and timing.

    start_state is the failure/restart state; success_state marks one
    delivered end-to-end pair. tau is the step duration in time units.
    """

    matrix: StochasticMatrix
    labels: tuple[str, ...]
    start_state: int
    success_state: int
    tau: float

    def __post_init__(self):
        if len(self.labels) != self.matrix.n:
            raise ProtocolError("labels length must match matrix dimension")
        if self.success_state == self.start_state:
            raise ProtocolError("success and start states must differ")
        if not self.tau > 0.0:
            raise ProtocolError(f"tau must be positive, got {self.tau!r}")
        # restart-after-success: delivering a pair resets the protocol
        if not np.array_equal(self.matrix[self.success_state], self.matrix[self.start_state]):
            raise ProtocolError("success-state row must equal start-state row")

    @property
    def n(self) -> int:
        return self.matrix.n


def build_multiheralded(params: MultiHeraldParams, tau: float = 1.0) -> ProtocolChain:
    """Chain for an n-round heralded link: states 0..n, success at n.

    Row i < n moves to i+1 with probability p_{i+1} and back to 0 otherwise;
    the success row repeats row 0 (the protocol restarts).
    """
    probs = params.round_probs
    n = params.n
    rows = np.zeros((n + 1, n + 1))
    for i in range(n):
        rows[i, 0] = 1.0 - probs[i]
        rows[i, i + 1] = probs[i]
    rows[n] = rows[0]
    labels = tuple(str(i) for i in range(n + 1))
    return ProtocolChain(markov.validate(rows), labels, 0, n, float(tau))


_SHS_LABELS = ("00", "01", "10", "11", "S")


def build_two_link_single_heralded(params: TwoLinkParams, tau: float = 1.0) -> ProtocolChain:
    """Two single-heralded links plus one swap: states 00, 01, 10, 11, S.

    Label "ab" means the left link holds a pair iff a=1 and the right link
    iff b=1; empty links re-attempt every step, ready links wait. From 11
    the swap succeeds with swap_prob (to S) or destroys both pairs (to 00).
    """
    if len(params.left_probs) != 1:
        raise HeraldCountError("single-heralded scheme takes one round per link")
    pl, = params.left_probs
    pr, = params.right_probs
    ps = params.swap_prob
    ql, qr = 1.0 - pl, 1.0 - pr
    row00 = [ql * qr, ql * pr, pl * qr, pl * pr, 0.0]
    rows = [
        row00,
        [0.0, ql, 0.0, pl, 0.0],
        [0.0, 0.0, qr, pr, 0.0],
        [1.0 - ps, 0.0, 0.0, 0.0, ps],
        list(row00),
    ]
    return ProtocolChain(markov.validate(rows), _SHS_LABELS, 0, 4, float(tau))


_DHS_LABELS = ("00", "01", "02", "10", "11", "12", "20", "21", "22", "S")


def build_two_link_double_heralded(params: TwoLinkParams, tau: float = 1.0) -> ProtocolChain:
    """Two double-heralded links plus one swap: states ij for i,j in {0,1,2}.

    Label "ij" gives rounds passed on the left (i) and right (j) link; 2
    means the link holds a pair. A link needing round r succeeds with its
    round-r probability or drops back to 0 rounds; ready links wait. From
    22 the swap succeeds with swap_prob or resets everything.
    """
    if len(params.left_probs) != 2:
        raise HeraldCountError("double-heralded scheme takes two rounds per link")
    pl1, pl2 = params.left_probs
    pr1, pr2 = params.right_probs
    ps = params.swap_prob
    ql1, ql2, qr1, qr2 = 1.0 - pl1, 1.0 - pl2, 1.0 - pr1, 1.0 - pr2

    idx = {lab: i for i, lab in enumerate(_DHS_LABELS)}
    rows = np.zeros((10, 10))
    left = {0: (pl1, ql1), 1: (pl2, ql2)}
    right = {0: (pr1, qr1), 1: (pr2, qr2)}
    for i in range(3):
        for j in range(3):
            r = idx[f"{i}{j}"]
            if i == 2 and j == 2:
                rows[r, idx["00"]] = 1.0 - ps
                rows[r, idx["S"]] = ps
                continue
            # each unfinished link advances a round or restarts at 0
            li = [(i, 1.0)] if i == 2 else [(i + 1, left[i][0]), (0, left[i][1])]
            rj = [(j, 1.0)] if j == 2 else [(j + 1, right[j][0]), (0, right[j][1])]
            for ti, wi in li:
                for tj, wj in rj:
                    rows[r, idx[f"{ti}{tj}"]] += wi * wj
    rows[idx["S"]] = rows[idx["00"]]
    return ProtocolChain(markov.validate(rows), _DHS_LABELS, 0, idx["S"], float(tau))


def cf_equilibrium_multiheralded(params: MultiHeraldParams) -> float:
    """Closed-form success-state equilibrium probability of the n-round chain.

    prod(p) / (1 + sum of the leading partial products p1..pi, i < n).
    """
    probs = params.round_probs
    num = math.prod(probs)
    den = 1.0 + sum(math.prod(probs[:i]) for i in range(1, len(probs)))
    return num / den


def cf_latency_variance_multiheralded(params: MultiHeraldParams) -> float:
    """Latency variance of the n-round chain, in squared steps.

    The mean-square term and the linear-correction term must be joined by
    a minus sign: the n=1 geometric case and the n=2 chain both pin it,
    and the all-ones chain only vanishes with the minus.
    """
    probs = params.round_probs
    if any(p == 0.0 for p in probs):
        raise ZeroProbabilityError("latency diverges when a round probability is 0")
    n = len(probs)
    prod_all = math.prod(probs)
    lead = 1.0 + sum(math.prod(probs[:i]) for i in range(1, n))
    correction = 2 * n - 1 + sum((2 * i - 1) * math.prod(probs[: n - i]) for i in range(1, n))
    return (lead / prod_all) ** 2 - correction / prod_all


def cf_bkp_exact_mean_throughput(p1: float, p2: float, N: int) -> float:
    """Exact expected successes per step of the 2-round chain over N steps.

    Finite-horizon mean from the failure state; converges to the
    equilibrium value as N grows. Equals (1/N) * sum of N-step visit
    probabilities of the success state. Units: successes per step.
    """
    p1 = _check_prob("p1", p1)
    p2 = _check_prob("p2", p2)
    if N < 1:
        raise ValueError("N must be a positive integer")
    pi2 = p1 * p2 / (1.0 + p1)
    # factored so the N = 1 transient cancels exactly in floating point
    return pi2 * (1.0 - (1.0 - (-p1) ** N) / ((1.0 + p1) * N))


def cf_bkp_throughput_variance_leading(p1: float, p2: float) -> float:
    """Leading-order N * tau^2 * Var of 2-round throughput: Var ~ result/(N tau^2)."""
    p1 = _check_prob("p1", p1)
    p2 = _check_prob("p2", p2)
    return p1 * p2 * ((1.0 + p1) ** 2 - p1 * p2 * (3.0 + p1)) / (1.0 + p1) ** 3


def _shs_probs(params: TwoLinkParams) -> tuple[float, float, float]:
    if len(params.left_probs) != 1:
        raise HeraldCountError("closed form applies to the single-heralded scheme")
    return params.left_probs[0], params.right_probs[0], params.swap_prob


def cf_equilibrium_shs(params: TwoLinkParams) -> float:
    """Closed-form success-state equilibrium probability of the shs chain."""
    pl, pr, ps = _shs_probs(params)
    if pl == 0.0 and pr == 0.0:
        raise DegenerateChainError("both links dead: equilibrium is 0/0")
    ql, qr = 1.0 - pl, 1.0 - pr
    num = pl * pr * ps * (1.0 - ql * qr)
    den = 2.0 * pl * pr + ql * pr**2 + qr * pl**2 - pl * pr * ql * qr
    return num / den


def cf_latency_variance_shs(params: TwoLinkParams) -> float:
    """Latency variance of the shs chain, in squared steps.

    The squared-mean term's numerator must carry -pl^2 pr^2: the all-ones
    chain only has zero variance with the minus sign.
    """
    pl, pr, ps = _shs_probs(params)
    if pl == 0.0 or pr == 0.0 or ps == 0.0:
        raise ZeroProbabilityError("latency diverges when pl, pr, or ps is 0")
    both = pl + pr - pl * pr
    first = (pl * pr + pl**2 + pr**2 - pl**2 * pr**2) / (pl * pr * ps * both)
    correction = (pl**2 * pr * (1.0 - pr) * (2.0 - pr)
                  + pl**3 * (1.0 - pr) ** 2 * (3.0 + pr)
                  + 3.0 * pr**3
                  + pl * pr * (4.0 + 2.0 * pr - 5.0 * pr**2))
    return first**2 - correction / (pl * pr * ps * both**2)


PROTOCOL_NAMES = ("multiherald", "shs", "dhs")


def build_chain(params, tau: float = 1.0) -> ProtocolChain:
    """Dispatch to the right builder for a params object."""
    if isinstance(params, MultiHeraldParams):
        return build_multiheralded(params, tau)
    if isinstance(params, TwoLinkParams):
        if len(params.left_probs) == 1:
            return build_two_link_single_heralded(params, tau)
        return build_two_link_double_heralded(params, tau)
    raise TypeError(f"unsupported params type {type(params).__name__}")


def protocol_name(params) -> str:
    if isinstance(params, MultiHeraldParams):
        return "multiherald"
    if isinstance(params, TwoLinkParams):
        return "shs" if len(params.left_probs) == 1 else "dhs"
    raise TypeError(f"unsupported params type {type(params).__name__}")


def params_to_json(params, tau: float = 1.0) -> str:
    """Serialize a parameter set to the CLI's JSON schema."""
    name = protocol_name(params)
    if name == "multiherald":
        doc = {"protocol": name, "round_probs": list(params.round_probs), "tau": float(tau)}
    else:
        doc = {"protocol": name,
               "left_probs": list(params.left_probs),
               "right_probs": list(params.right_probs),
               "swap_prob": float(params.swap_prob),
               "tau": float(tau)}
    return json.dumps(doc)


def params_from_json(text: str):
    """Parse the CLI's JSON schema back into (params, tau)."""
    doc = json.loads(text)
    if not isinstance(doc, dict) or "protocol" not in doc:
        raise ProtocolError('params document must be an object with a "protocol" key')
    name = doc["protocol"]
    tau = float(doc.get("tau", 1.0))
    if name == "multiherald":
        extra = set(doc) - {"protocol", "round_probs", "tau"}
        if extra or "round_probs" not in doc:
            raise ProtocolError(f"bad multiherald params document (extra/missing keys: {extra or 'round_probs'})")
        return MultiHeraldParams(tuple(doc["round_probs"])), tau
    if name in ("shs", "dhs"):
        extra = set(doc) - {"protocol", "left_probs", "right_probs", "swap_prob", "tau"}
        missing = {"left_probs", "right_probs", "swap_prob"} - set(doc)
        if extra or missing:
            raise ProtocolError(f"bad {name} params document (extra {extra}, missing {missing})")
        params = TwoLinkParams(tuple(doc["left_probs"]), tuple(doc["right_probs"]),
                               doc["swap_prob"])
        if protocol_name(params) != name:
            raise HeraldCountError(f"herald count does not match protocol {name!r}")
        return params, tau
    raise ProtocolError(f"unknown protocol {name!r}; expected one of {PROTOCOL_NAMES}")
