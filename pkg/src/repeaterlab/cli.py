"""Command-line front end: analyze chains, sweep grids, simulate, compare.

Subcommands
    analyze   equilibrium + throughput + latency report for one parameter set
    sweep     grid evaluation driven by a JSON spec file, CSV out
    simulate  Monte Carlo run, per-trajectory CSV + JSON summary
    compare   analytical vs simulated rate with a sigma-distance column

Exit codes: 0 success, 2 validation error, 3 numerical failure. Errors are
emitted as one JSON object on stderr. CSV cells use 17 significant digits
with '.' as the decimal separator; non-finite values abort with exit 3
instead of being written. File outputs are written to a temporary file and
renamed into place, so a failed run never leaves a partial file behind.

Units: chain rates are reported per elementary step in sweep and compare
output (multiply by 1/tau for physical rates); estimate_throughput values
inside analyze reports are per time unit. Latencies are in time units.
"""
from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import estimators, markov, protocols, simulator
from ._threads import parallel_map

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

_CHAIN_METRICS = ("equilibrium", "mean_latency", "latency_std_over_mean",
                  "naive_var", "exact_var", "simulated_mean")
_NESTED_METRICS = ("nested_type1", "nested_type2", "simulated_mean")
_ALL_METRICS = ("equilibrium", "mean_latency", "latency_std_over_mean",
                "naive_var", "exact_var", "nested_type1", "nested_type2",
                "simulated_mean")

# sweep parameter names that configure the run rather than the protocol;
# they may only appear in fixed_params
_RESERVED_FIXED = ("tau", "horizon", "steps", "trajectories", "seed", "n")

_SHS_ALIASES = {
    "pl": ("pl",), "pr": ("pr",), "ps": ("ps",),
    "p": ("pl", "pr"),
}
_DHS_ALIASES = {
    "pl1": ("pl1",), "pl2": ("pl2",), "pr1": ("pr1",), "pr2": ("pr2",),
    "ps": ("ps",),
    "p1": ("pl1", "pr1"), "p2": ("pl2", "pr2"),
    "pl": ("pl1", "pl2"), "pr": ("pr1", "pr2"),
    "p": ("pl1", "pl2", "pr1", "pr2"),
}
_NESTED_ALIASES = {"p": ("p",), "k": ("k",)}


class CliValidationError(ValueError):
    """Bad flag combination, malformed spec file, or inconsistent inputs."""


class NumericalOutputError(Exception):
    """A result that should be finite is NaN or infinite."""


# ---------------------------------------------------------------- helpers

def _fmt(value) -> str:
    v = float(value)
    if not math.isfinite(v):
        raise NumericalOutputError(f"non-finite value {v!r} in output")
    return f"{v:.17g}"


def _assert_finite_tree(obj, path="report"):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise NumericalOutputError(f"non-finite value at {path}")
    elif isinstance(obj, dict):
        for key, val in obj.items():
            _assert_finite_tree(val, f"{path}.{key}")
    elif isinstance(obj, (list, tuple)):
        for i, val in enumerate(obj):
            _assert_finite_tree(val, f"{path}[{i}]")


def _atomic_write(path: str, text: str):
    target = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(target), prefix=".rlab-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, output_path):
    if output_path is None:
        print(text)
    else:
        _atomic_write(output_path, text if text.endswith("\n") else text + "\n")


def _comma_floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(","))


def _require_int(name: str, value, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise CliValidationError(f"{name} must be an integer, got {value!r}")
    if isinstance(value, float):
        if not value.is_integer():
            raise CliValidationError(f"{name} must be an integer, got {value!r}")
        value = int(value)
    if value < minimum:
        raise CliValidationError(f"{name} must be >= {minimum}, got {value}")
    return value


# --------------------------------------------------- protocol flag parsing

def _params_from_args(args):
    """Resolve (--params-json | --protocol + prob flags) into (params, tau)."""
    inline = [name for name, val in (("--protocol", args.protocol),
                                     ("--probs", args.probs),
                                     ("--pl", args.pl), ("--pr", args.pr),
                                     ("--ps", args.ps), ("--tau", args.tau))
              if val is not None]
    if args.params_json is not None:
        if inline:
            raise CliValidationError(
                f"--params-json conflicts with {', '.join(inline)}")
        with open(args.params_json, "r") as handle:
            return protocols.params_from_json(handle.read())
    if args.protocol is None:
        raise CliValidationError("either --protocol or --params-json is required")
    tau = 1.0 if args.tau is None else args.tau
    if args.protocol == "multiherald":
        if args.probs is None:
            raise CliValidationError("--probs is required for --protocol multiherald")
        if args.pl is not None or args.pr is not None or args.ps is not None:
            raise CliValidationError("--pl/--pr/--ps do not apply to multiherald")
        params = protocols.MultiHeraldParams(args.probs)
    else:
        if args.probs is not None:
            raise CliValidationError(f"--probs does not apply to {args.protocol}")
        if args.pl is None or args.pr is None or args.ps is None:
            raise CliValidationError(f"--pl, --pr and --ps are required for {args.protocol}")
        params = protocols.TwoLinkParams(args.pl, args.pr, args.ps)
        got = protocols.protocol_name(params)
        if got != args.protocol:
            raise CliValidationError(
                f"--pl/--pr carry {len(args.pl)} heralding round(s), which is "
                f"protocol {got!r}, not {args.protocol!r}")
    return params, tau


# ----------------------------------------------------------------- analyze

def _closed_form_deltas(params, chain, pi, latency):
    name = protocols.protocol_name(params)
    if name == "multiherald":
        cf_eq = protocols.cf_equilibrium_multiheralded(params)
        cf_var = protocols.cf_latency_variance_multiheralded(params)
    elif name == "shs":
        cf_eq = protocols.cf_equilibrium_shs(params)
        cf_var = protocols.cf_latency_variance_shs(params)
    else:
        return None
    return {
        "equilibrium": abs(cf_eq - pi[chain.success_state]),
        "latency_mean": abs(chain.tau / cf_eq - latency.mean),
        "latency_variance": abs(cf_var * chain.tau**2 - latency.variance),
    }


def cmd_analyze(args) -> int:
    params, tau = _params_from_args(args)
    chain = protocols.build_chain(params, tau)
    pi = markov.equilibrium(chain.matrix)
    throughput = estimators.estimate_throughput(chain, args.horizon, exact=args.exact)
    latency = estimators.estimate_latency(chain)
    try:
        deltas = _closed_form_deltas(params, chain, pi, latency)
    except protocols.ProtocolError:
        deltas = None  # closed form undefined at this parameter point
    report = {
        "protocol": protocols.protocol_name(params),
        "params": json.loads(protocols.params_to_json(params, tau)),
        "labels": list(chain.labels),
        "matrix": json.loads(markov.matrix_to_json(chain.matrix)),
        "equilibrium": {
            "by_state": {label: pi[i] for i, label in enumerate(chain.labels)},
            "success_probability": pi[chain.success_state],
        },
        "throughput": {
            "mean_rate": throughput.mean_rate,
            "naive_variance": throughput.naive_variance,
            "exact_variance": throughput.exact_variance,
            "horizon_N": throughput.horizon_N,
        },
        "latency": {"mean": latency.mean, "variance": latency.variance},
        "closed_form_deltas": deltas,
    }
    _assert_finite_tree(report)
    _emit(json.dumps(report, indent=2), args.output)
    return EXIT_OK


# ------------------------------------------------------------------- sweep

def _multiherald_aliases(prob_names, fixed):
    if "p" in prob_names:
        if len(prob_names) > 1:
            raise CliValidationError(
                "tied round probability 'p' cannot be mixed with per-round names")
        n = fixed.get("n")
        if n is None:
            raise CliValidationError("tied 'p' needs fixed_params entry 'n'")
        n = _require_int("fixed_params.n", n, 1)
        return {"p": tuple(f"p{i}" for i in range(1, n + 1))}, n
    if "n" in fixed:
        raise CliValidationError("fixed_params 'n' only applies with the tied 'p' alias")
    indices = []
    for name in prob_names:
        if not (name.startswith("p") and name[1:].isdigit() and not name[1:].startswith("0")):
            raise CliValidationError(f"unknown multiherald parameter {name!r}")
        indices.append(int(name[1:]))
    if not indices:
        raise CliValidationError("multiherald sweep names no round probabilities")
    n = max(indices)
    if sorted(indices) != list(range(1, n + 1)):
        raise CliValidationError(
            f"round probabilities must cover p1..p{n} with no gaps or repeats")
    return {f"p{i}": (f"p{i}",) for i in range(1, n + 1)}, n


class _SweepPlan:
    """Validated sweep: grid axes, slot resolution, metric evaluator inputs."""

    def __init__(self, spec: dict):
        allowed_keys = {"protocol", "varied_params", "fixed_params", "outputs", "description"}
        unknown = set(spec) - allowed_keys
        if unknown:
            raise CliValidationError(f"unknown sweep spec keys {sorted(unknown)}")
        for required in ("protocol", "varied_params", "outputs"):
            if required not in spec:
                raise CliValidationError(f"sweep spec is missing {required!r}")

        self.protocol = spec["protocol"]
        if self.protocol not in (*protocols.PROTOCOL_NAMES, "nested"):
            raise CliValidationError(f"unknown sweep protocol {self.protocol!r}")

        self.outputs = list(spec["outputs"])
        if not self.outputs:
            raise CliValidationError("outputs must name at least one metric")
        if len(set(self.outputs)) != len(self.outputs):
            raise CliValidationError("outputs contains duplicates")
        legal = _NESTED_METRICS if self.protocol == "nested" else _CHAIN_METRICS
        for metric in self.outputs:
            if metric not in _ALL_METRICS:
                raise CliValidationError(f"unknown metric {metric!r}")
            if metric not in legal:
                raise CliValidationError(
                    f"metric {metric!r} does not apply to protocol {self.protocol!r}")

        fixed = dict(spec.get("fixed_params", {}))
        self.varied = []
        for entry in spec["varied_params"]:
            missing = {"name", "start", "stop", "count"} - set(entry)
            if missing:
                raise CliValidationError(f"varied_params entry is missing {sorted(missing)}")
            name = entry["name"]
            if name in _RESERVED_FIXED:
                raise CliValidationError(f"{name!r} may only appear in fixed_params")
            count = _require_int(f"count for {name!r}", entry["count"], 2)
            start, stop = float(entry["start"]), float(entry["stop"])
            if not (math.isfinite(start) and math.isfinite(stop)):
                raise CliValidationError(f"non-finite grid bounds for {name!r}")
            self.varied.append((name, np.linspace(start, stop, count)))

        self.fixed_probs = {k: v for k, v in fixed.items() if k not in _RESERVED_FIXED}
        prob_names = [name for name, _ in self.varied] + list(self.fixed_probs)
        if len(set(prob_names)) != len(prob_names):
            raise CliValidationError("a parameter name appears more than once")

        if self.protocol == "shs":
            aliases, self.n_rounds = _SHS_ALIASES, 1
        elif self.protocol == "dhs":
            aliases, self.n_rounds = _DHS_ALIASES, 2
        elif self.protocol == "nested":
            aliases, self.n_rounds = _NESTED_ALIASES, None
        else:
            aliases, self.n_rounds = _multiherald_aliases(prob_names, fixed)

        slot_owner = {}
        self.expansion = {}
        for name in prob_names:
            if name not in aliases:
                raise CliValidationError(
                    f"unknown parameter {name!r} for protocol {self.protocol!r}")
            slots = aliases[name]
            for slot in slots:
                if slot in slot_owner:
                    raise CliValidationError(
                        f"parameters {slot_owner[slot]!r} and {name!r} both set {slot!r}")
                slot_owner[slot] = name
            self.expansion[name] = slots
        all_slots = set().union(*aliases.values())
        uncovered = all_slots - set(slot_owner)
        if uncovered:
            raise CliValidationError(f"parameters not set: {sorted(uncovered)}")

        self.tau = float(fixed.get("tau", 1.0))
        self.horizon = _require_int("fixed_params.horizon", fixed.get("horizon", 100_000), 1)
        if any(m in self.outputs for m in ("simulated_mean",)):
            self.sim_config = simulator.SimConfig(
                seed=_require_int("fixed_params.seed", fixed.get("seed", 0), 0),
                steps_per_trajectory=_require_int(
                    "fixed_params.steps", fixed.get("steps", 100_000), 1),
                trajectories=_require_int(
                    "fixed_params.trajectories", fixed.get("trajectories", 1_000), 1),
            )
        else:
            self.sim_config = None

    def grid(self):
        axes = [axis for _, axis in self.varied]
        return list(itertools.product(*axes))

    def slots_for(self, combo) -> dict:
        assignment = {}
        for (name, _), value in zip(self.varied, combo):
            for slot in self.expansion[name]:
                assignment[slot] = float(value)
        for name, value in self.fixed_probs.items():
            for slot in self.expansion[name]:
                assignment[slot] = float(value)
        return assignment

    def chain_for(self, slots) -> protocols.ProtocolChain:
        if self.protocol == "multiherald":
            params = protocols.MultiHeraldParams(
                tuple(slots[f"p{i}"] for i in range(1, self.n_rounds + 1)))
        elif self.protocol == "shs":
            params = protocols.TwoLinkParams((slots["pl"],), (slots["pr"],), slots["ps"])
        else:
            params = protocols.TwoLinkParams((slots["pl1"], slots["pl2"]),
                                             (slots["pr1"], slots["pr2"]), slots["ps"])
        return protocols.build_chain(params, self.tau)

    def evaluate(self, combo) -> list[float]:
        slots = self.slots_for(combo)
        if self.protocol == "nested":
            return self._evaluate_nested(slots)
        chain = self.chain_for(slots)
        values = []
        latency = None
        for metric in self.outputs:
            if metric == "equilibrium":
                values.append(markov.equilibrium(chain.matrix)[chain.success_state])
            elif metric in ("mean_latency", "latency_std_over_mean"):
                if latency is None:
                    latency = estimators.estimate_latency(chain)
                if metric == "mean_latency":
                    values.append(latency.mean)
                else:
                    values.append(math.sqrt(latency.variance) / latency.mean)
            elif metric == "naive_var":
                values.append(estimators.estimate_throughput(chain, self.horizon).naive_variance)
            elif metric == "exact_var":
                values.append(estimators.estimate_throughput(
                    chain, self.horizon, exact=True).exact_variance)
            else:
                values.append(simulator.simulate_chain(chain, self.sim_config).mean_throughput)
        return values

    def _evaluate_nested(self, slots) -> list[float]:
        p = slots["p"]
        k = slots["k"]
        if abs(k - round(k)) > 1e-9:
            raise CliValidationError(f"nesting level k must be an integer, got {k!r}")
        k = int(round(k))
        values = []
        for metric in self.outputs:
            if metric == "nested_type1":
                values.append(estimators.nested_throughput(p, k, "type1").rate)
            elif metric == "nested_type2":
                values.append(estimators.nested_throughput(p, k, "type2").rate)
            else:
                values.append(simulator.simulate_nested(k, p, self.sim_config).mean_throughput)
        return values


def cmd_sweep(args) -> int:
    with open(args.spec, "r") as handle:
        spec = json.load(handle)
    if not isinstance(spec, dict):
        raise CliValidationError("sweep spec must be a JSON object")
    plan = _SweepPlan(spec)
    combos = plan.grid()
    results = parallel_map(plan.evaluate, combos)
    header = [name for name, _ in plan.varied] + list(plan.outputs)
    lines = [",".join(header)]
    for combo, metrics in zip(combos, results):
        lines.append(",".join([_fmt(v) for v in combo] + [_fmt(v) for v in metrics]))
    _atomic_write(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


# -------------------------------------------------------- simulate/compare

def _sim_target(args):
    """Returns (label dict, run closure) for simulate/compare targets."""
    nested_flags = [name for name, val in (("--k", args.k), ("--p", args.p)) if val is not None]
    if args.nested:
        if args.protocol is not None or args.params_json is not None or args.probs is not None:
            raise CliValidationError("--nested conflicts with protocol chain flags")
        if args.k is None or args.p is None:
            raise CliValidationError("--nested requires --k and --p")
        label = {"kind": "nested", "k": args.k, "p": args.p}
        return label, None, lambda config: simulator.simulate_nested(args.k, args.p, config)
    if nested_flags:
        raise CliValidationError(f"{', '.join(nested_flags)} require --nested")
    params, tau = _params_from_args(args)
    chain = protocols.build_chain(params, tau)
    label = {"kind": "chain", "protocol": protocols.protocol_name(params),
             "params": json.loads(protocols.params_to_json(params, tau))}
    return label, chain, lambda config: simulator.simulate_chain(chain, config)


def _sim_config_from_args(args) -> simulator.SimConfig:
    seed = args.seed
    if seed is None:
        seed = int.from_bytes(os.urandom(8), "little")
    return simulator.SimConfig(seed=seed, steps_per_trajectory=args.steps,
                               trajectories=args.trajectories)


def cmd_simulate(args) -> int:
    label, _, run = _sim_target(args)
    config = _sim_config_from_args(args)
    result = run(config)
    if args.csv_out is not None:
        lines = ["trajectory_index,success_count"]
        lines += [f"{i},{count}" for i, count in enumerate(result.success_counts)]
        _atomic_write(args.csv_out, "\n".join(lines) + "\n")
    summary = {
        "target": label,
        "config": {
            "seed": result.config_echo.seed,
            "steps_per_trajectory": result.config_echo.steps_per_trajectory,
            "trajectories": result.config_echo.trajectories,
            "rng_algorithm": result.config_echo.rng_algorithm,
        },
        "mean_throughput": result.mean_throughput,
        "throughput_variance": result.throughput_variance,
        "std_error": result.std_error(),
        "wall_time": result.wall_time,
    }
    _assert_finite_tree(summary)
    _emit(json.dumps(summary, indent=2), args.json_out)
    return EXIT_OK


def cmd_compare(args) -> int:
    label, chain, run = _sim_target(args)
    config = _sim_config_from_args(args)
    result = run(config)
    simulated = result.mean_throughput
    err = result.std_error()

    def sigma(analytical: float) -> float:
        gap = abs(analytical - simulated)
        if err == 0.0:
            if gap == 0.0:
                return 0.0
            raise NumericalOutputError(
                "zero standard error with nonzero analytical-simulated gap")
        return gap / err

    rows = []
    if label["kind"] == "nested":
        for method in ("type1", "type2"):
            rate = estimators.nested_throughput(args.p, args.k, method).rate
            rows.append((f"nested_{method}_rate", rate, simulated, err, sigma(rate)))
    else:
        pi = markov.equilibrium(chain.matrix)
        rate = pi[chain.success_state]
        rows.append(("mean_throughput_per_step", rate, simulated, err, sigma(rate)))
    lines = ["quantity,analytical,simulated,std_error,sigma_distance"]
    for quantity, *cells in rows:
        lines.append(",".join([quantity] + [_fmt(v) for v in cells]))
    _emit("\n".join(lines), args.output)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _add_protocol_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("protocol parameters")
    group.add_argument("--protocol", choices=protocols.PROTOCOL_NAMES,
                       help="protocol family for an analytical chain")
    group.add_argument("--probs", type=_comma_floats, metavar="P1,...,PN",
                       help="multiherald per-round success probabilities")
    group.add_argument("--pl", type=_comma_floats, metavar="P[,P2]",
                       help="left link probabilities (1 value for shs, 2 for dhs)")
    group.add_argument("--pr", type=_comma_floats, metavar="P[,P2]",
                       help="right link probabilities (1 value for shs, 2 for dhs)")
    group.add_argument("--ps", type=float, help="swap success probability")
    group.add_argument("--tau", type=float, help="elementary step duration (default 1.0)")
    group.add_argument("--params-json", metavar="FILE",
                       help="read protocol parameters from a JSON file instead of flags")


def _add_sim_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("simulation")
    group.add_argument("--nested", action="store_true",
                       help="simulate a 2^k-link nested swapping chain")
    group.add_argument("--k", type=int, help="nesting level (with --nested)")
    group.add_argument("--p", type=float,
                       help="elementary link success probability (with --nested)")
    group.add_argument("--steps", type=int, default=100_000,
                       help="steps per trajectory (default 100000)")
    group.add_argument("--trajectories", type=int, default=1_000,
                       help="independent trajectories (default 1000)")
    group.add_argument("--seed", type=int,
                       help="RNG seed; drawn from OS entropy and echoed if omitted")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repeaterlab",
        description="Analytical and Monte Carlo statistics for repeater-chain "
                    "entanglement distribution protocols.")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="report on one protocol chain")
    _add_protocol_flags(analyze)
    analyze.add_argument("--horizon", type=int, default=100_000,
                         help="finite horizon N for throughput variance (default 100000)")
    analyze.add_argument("--exact", action="store_true",
                         help="also compute the exact finite-horizon variance")
    analyze.add_argument("--output", metavar="FILE", help="write the JSON report here")
    analyze.set_defaults(handler=cmd_analyze)

    sweep = sub.add_parser("sweep", help="evaluate metrics over a parameter grid")
    sweep.add_argument("--spec", required=True, metavar="FILE", help="sweep spec JSON")
    sweep.add_argument("--output", required=True, metavar="FILE", help="CSV destination")
    sweep.set_defaults(handler=cmd_sweep)

    simulate = sub.add_parser("simulate", help="run the Monte Carlo engines")
    _add_protocol_flags(simulate)
    _add_sim_flags(simulate)
    simulate.add_argument("--csv-out", metavar="FILE",
                          help="write per-trajectory success counts here")
    simulate.add_argument("--json-out", metavar="FILE",
                          help="write the JSON summary here instead of stdout")
    simulate.set_defaults(handler=cmd_simulate)

    compare = sub.add_parser("compare", help="analytical vs simulated throughput")
    _add_protocol_flags(compare)
    _add_sim_flags(compare)
    compare.add_argument("--output", metavar="FILE", help="write the comparison CSV here")
    compare.set_defaults(handler=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except NumericalOutputError as exc:
        return _fail("numerical", exc)
    except (markov.MarkovError, np.linalg.LinAlgError) as exc:
        return _fail("numerical", exc)
    except (ValueError, OSError, KeyError, TypeError) as exc:
        return _fail("validation", exc)


def _fail(category: str, exc: Exception) -> int:
    payload = {"error": {"category": category, "type": type(exc).__name__,
                         "message": str(exc)}}
    print(json.dumps(payload), file=sys.stderr)
    return EXIT_NUMERICAL if category == "numerical" else EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
