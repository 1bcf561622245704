"""Command line front end.

Configuration grammar: whitespace- or newline-separated ``key=value``
tokens; ``#`` starts a comment.  List values are comma-separated.  Keys:

    command   enumerate | count | gap | mix | sample | hit | blockgap |
              envelope | halo | scaling
    alpha     bias, > 0
    k n h     polymer count, length, end height (n + h even, |h| <= n)
    M         cube side for envelope / halo (square case k=M, n=2M, h=0)
    M_list    cube sides for scaling
    xi sigma  wedge | vee | explicit '+'/'-' increment string
    seed      master seed (replica r uses the stream split off at r)
    replicas samples horizon max_v kind params C_alpha ceilings
    state_cap output format(csv|json) timing(0|1) table(replicas|survival)

Every output starts with a header that echoes the configuration and the
package version.  PPFLIP_STATE_CAP overrides the default enumeration cap.
Exit codes: 0 ok, 2 configuration error, 3 cap
exceeded, 4 some result censored.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .core_model import (
    BoundaryPair,
    PolymerConfig,
    excess_volume,
    path_from_string,
    path_to_string,
    vee,
    wedge,
)
from .equilibrium import CapExceeded, count_by_volume, exact_measure, state_cap

EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_CENSORED = 0, 2, 3, 4

COMMANDS = ("enumerate", "count", "gap", "mix", "sample", "hit", "blockgap", "envelope", "halo", "scaling")

REQUIRED = {
    "enumerate": ("k", "n", "alpha"),
    "count": ("max_v",),
    "gap": ("k", "n", "alpha"),
    "mix": ("k", "n", "alpha"),
    "sample": ("k", "n", "alpha"),
    "hit": ("k", "n", "alpha"),
    "blockgap": ("k", "n", "alpha", "kind", "params"),
    "envelope": ("M", "alpha", "C_alpha"),
    "halo": ("M", "alpha", "C_alpha"),
    "scaling": ("M_list", "alpha"),
}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(problems))


@dataclass
class RunConfig:
    command: str = ""
    alpha: float | None = None
    k: int | None = None
    n: int | None = None
    h: int = 0
    M: int | None = None
    M_list: tuple = ()
    xi: str = "wedge"
    sigma: str = "vee"
    seed: int = 0
    replicas: int = 100
    samples: int = 1000
    horizon: float | None = None
    max_v: int | None = None
    kind: str | None = None
    params: tuple = ()
    C_alpha: tuple = ()
    ceilings: int = 5
    state_cap: int | None = None
    output: str | None = None
    format: str = "csv"
    timing: int = 0
    table: str = "replicas"

    def bounds(self) -> BoundaryPair:
        if self.command in ("envelope", "halo"):
            return BoundaryPair.full(2 * self.M, 0)
        return BoundaryPair(_path_spec(self.xi, self.n, self.h), _path_spec(self.sigma, self.n, self.h))

    def to_text(self) -> str:
        """Canonical one-line form; ``parse_config`` reads it back."""
        parts = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None or v == () or f.name == "output":
                continue
            if isinstance(v, tuple):
                v = ",".join(_fmt(x) for x in v)
            elif isinstance(v, float):
                v = _fmt(v)
            parts.append(f"{f.name}={v}")
        return " ".join(parts)


_INT = {"k", "n", "h", "M", "seed", "replicas", "samples", "max_v", "ceilings", "state_cap", "timing"}
_FLOAT = {"alpha", "horizon"}
_INT_LIST = {"M_list", "params"}
_FLOAT_LIST = {"C_alpha"}
_STR = {"command", "xi", "sigma", "kind", "output", "format", "table"}
KEYS = _INT | _FLOAT | _INT_LIST | _FLOAT_LIST | _STR


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(float(x), ".17g")
    return str(x)


def _path_spec(spec: str, n: int, h: int) -> np.ndarray:
    if spec == "wedge":
        return wedge(n, h)
    if spec == "vee":
        return vee(n, h)
    return path_from_string(spec)


def parse_config(text: str) -> RunConfig:
    """Validated configuration, or ConfigError listing every problem found."""
    problems: list[str] = []
    values: dict = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        for tok in line.split():
            if "=" not in tok:
                problems.append(f"malformed token {tok!r} (expected key=value)")
                continue
            key, raw = tok.split("=", 1)
            if key not in KEYS:
                problems.append(f"unknown key {key!r}")
                continue
            try:
                if key in _INT:
                    values[key] = int(raw)
                elif key in _FLOAT:
                    values[key] = float(raw)
                elif key in _INT_LIST:
                    values[key] = tuple(int(x) for x in raw.split(",") if x)
                elif key in _FLOAT_LIST:
                    values[key] = tuple(float(x) for x in raw.split(",") if x)
                else:
                    values[key] = raw
            except ValueError:
                problems.append(f"bad value for {key}: {raw!r}")
    cfg = RunConfig(**values)
    problems += _validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def _validate(cfg: RunConfig) -> list[str]:
    p = []
    if cfg.command not in COMMANDS:
        p.append(f"command must be one of {', '.join(COMMANDS)} (got {cfg.command!r})")
    else:
        for key in REQUIRED[cfg.command]:
            if getattr(cfg, key) in (None, ()):
                p.append(f"{cfg.command} needs {key}")
    if cfg.alpha is not None and not cfg.alpha > 0:
        p.append(f"alpha must be positive (got {_fmt(cfg.alpha)})")
    if cfg.k is not None and cfg.k < 1:
        p.append("k must be >= 1")
    if cfg.n is not None:
        if cfg.n < 1:
            p.append("n must be >= 1")
        elif (cfg.n + cfg.h) % 2 or abs(cfg.h) > cfg.n:
            p.append(f"n={cfg.n}, h={cfg.h}: need n + h even and |h| <= n")
        elif cfg.command not in ("envelope", "halo"):
            paths = {}
            for name in ("xi", "sigma"):
                spec = getattr(cfg, name)
                try:
                    path = _path_spec(spec, cfg.n, cfg.h)
                except ValueError as e:
                    p.append(f"{name}: {e}")
                    continue
                if path.size != cfg.n + 1 or path[-1] != cfg.h:
                    p.append(f"{name} must be a path of length n={cfg.n} ending at h={cfg.h}")
                    continue
                paths[name] = path
            if len(paths) == 2 and np.any(paths["xi"] < paths["sigma"]):
                p.append("ceiling xi lies below floor sigma somewhere")
    if cfg.M is not None and cfg.M < 2:
        p.append("M must be >= 2")
    if any(m < 2 for m in cfg.M_list):
        p.append("every entry of M_list must be >= 2")
    if any(c <= 0 for c in cfg.C_alpha):
        p.append("C_alpha values must be positive")
    if cfg.kind is not None and cfg.kind not in ("particle", "polymer"):
        p.append("kind must be particle or polymer")
    if any(x < 0 for x in cfg.params):
        p.append("params must be non-negative")
    if cfg.replicas < 1 or cfg.samples < 1 or cfg.ceilings < 1:
        p.append("replicas, samples and ceilings must be >= 1")
    if cfg.horizon is not None and not cfg.horizon > 0:
        p.append("horizon must be positive")
    if cfg.format not in ("csv", "json"):
        p.append("format must be csv or json")
    if cfg.table not in ("replicas", "survival"):
        p.append("table must be replicas or survival")
    if cfg.max_v is not None and cfg.max_v < 0:
        p.append("max_v must be >= 0")
    return p


# --- commands ----------------------------------------------------------------


@dataclass
class Result:
    columns: list
    rows: list = field(default_factory=list)
    censored: bool = False


def _cap(cfg: RunConfig) -> int:
    return cfg.state_cap if cfg.state_cap is not None else state_cap()


def _encode(H) -> str:
    return "|".join(path_to_string(r) for r in H)


def _params(cfg):
    from .glauber import DynamicsParams

    return DynamicsParams(cfg.alpha, cfg.bounds(), cfg.k, cfg.seed, cfg.horizon or 0.0)


def cmd_enumerate(cfg: RunConfig) -> Result:
    m = exact_measure(cfg.bounds(), cfg.k, cfg.alpha, cap=_cap(cfg))
    res = Result(["index", "paths", "volume", "weight", "probability"])
    for i, (H, v, lw, p) in enumerate(zip(m.heights, m.volumes, m.log_weights, m.probs)):
        res.rows.append([i, _encode(H), int(v), math.exp(lw), p])
    return res


def cmd_count(cfg: RunConfig) -> Result:
    t = count_by_volume(cfg.max_v)
    return Result(["v", "count"], [[v, int(c)] for v, c in enumerate(t.counts)])


def cmd_gap(cfg: RunConfig, mix: bool = False) -> Result:
    from .glauber import build_exact_chain, mixing_time_gap_bound, spectral_gap_exact, tv_mixing_exact

    chain = build_exact_chain(cfg.bounds(), cfg.k, cfg.alpha, cap=min(_cap(cfg), 5000))
    gap = spectral_gap_exact(chain)
    row = [cfg.k, cfg.n, cfg.h, cfg.alpha, chain.size, gap]
    cols = ["k", "n", "h", "alpha", "states", "gap"]
    if mix:
        row += [tv_mixing_exact(chain), mixing_time_gap_bound(chain)]
        cols += ["t_mix", "gap_bound"]
    return Result(cols, [row])


def cmd_sample(cfg: RunConfig) -> Result:
    from .coupling import cftp_samples

    S = cftp_samples(_params(cfg), cfg.samples)
    xi = cfg.bounds().xi
    res = Result(["seed", "k", "n", "h", "alpha", "sample", "paths", "volume"])
    for i, H in enumerate(S):
        res.rows.append([cfg.seed, cfg.k, cfg.n, cfg.h, cfg.alpha, i, _encode(H),
                         excess_volume(PolymerConfig(H, h=cfg.h), xi)])
    return res


def cmd_hit(cfg: RunConfig) -> Result:
    from .coupling import hitting_times_max, survival_curve
    from .seeding import replica_seed

    horizon = cfg.horizon or 1000.0
    p = _params(cfg)
    T = hitting_times_max(p, cfg.replicas, horizon=horizon)
    cens = bool(np.isinf(T).any())
    if cfg.table == "survival":
        grid = np.linspace(0.0, horizon, 51)
        S = survival_curve(T, grid)
        return Result(["t", "survival"], [[t, s] for t, s in zip(grid, S)], cens)
    res = Result(["replica", "seed", "k", "n", "h", "alpha", "t_hit", "censored"], censored=cens)
    for r, t in enumerate(T):
        res.rows.append([r, replica_seed(cfg.seed, r), cfg.k, cfg.n, cfg.h, cfg.alpha, float(t), int(math.isinf(t))])
    return res


def cmd_blockgap(cfg: RunConfig) -> Result:
    from .block_dynamics import block_family
    from .glauber import spectral_gap_exact

    m = exact_measure(cfg.bounds(), cfg.k, cfg.alpha, cap=min(_cap(cfg), 5000))
    res = Result(["kind", "n", "k", "alpha", "param", "gap"])
    for q in cfg.params:
        res.rows.append([cfg.kind, cfg.n, cfg.k, cfg.alpha, q, spectral_gap_exact(block_family(cfg.kind, m, q).chain())])
    return res


def cmd_envelope(cfg: RunConfig) -> Result:
    from .mixing_lab import check_envelope_containment

    res = Result(["M", "alpha", "C_alpha", "replica", "first_violation_time", "worst_excess"])
    for C in cfg.C_alpha:
        rep = check_envelope_containment(cfg.M, cfg.alpha, C, cfg.replicas, cfg.seed, cfg.horizon, pad=True)
        for r in range(cfg.replicas):
            res.rows.append([rep.M, cfg.alpha, C, r, float(rep.first_violation[r]), int(rep.worst_excess[r].max())])
    return res


def cmd_halo(cfg: RunConfig) -> Result:
    from .mixing_lab import check_halo_confinement, random_ceiling
    from .seeding import replica_rng

    res = Result(["M", "alpha", "C_alpha", "ceiling", "paths", "replica", "confinement_flag",
                  "confined_fraction", "excess_volume", "volume_bound"])
    for c in range(cfg.ceilings):
        xi = random_ceiling(cfg.M, replica_rng(cfg.seed, 10**6 + c))
        for C in cfg.C_alpha:
            rep = check_halo_confinement(xi, cfg.M, cfg.alpha, C, cfg.replicas, cfg.seed + c, cfg.horizon)
            for r in range(cfg.replicas):
                row = rep.confined[r]
                res.rows.append([cfg.M, cfg.alpha, C, c, path_to_string(xi), r, int(row.all()) if row.size else "",
                                 float(row.mean()) if row.size else math.nan, rep.excess_volume, rep.volume_bound])
    return res


def cmd_scaling(cfg: RunConfig) -> Result:
    from .mixing_lab import hitting_scaling_experiment

    tab = hitting_scaling_experiment(cfg.M_list, cfg.alpha, cfg.replicas, cfg.seed)
    res = Result(["M", "alpha", "replicas", "censored", "median", "quantile", "fit_a", "fit_b"])
    for r in tab.rows:
        res.rows.append([r.M, cfg.alpha, r.replicas, r.censored, r.median, r.quantile, tab.exponent_a, tab.exponent_b])
    res.censored = any(r.censored for r in tab.rows)
    return res


DISPATCH = {
    "enumerate": cmd_enumerate,
    "count": cmd_count,
    "gap": cmd_gap,
    "mix": lambda c: cmd_gap(c, mix=True),
    "sample": cmd_sample,
    "hit": cmd_hit,
    "blockgap": cmd_blockgap,
    "envelope": cmd_envelope,
    "halo": cmd_halo,
    "scaling": cmd_scaling,
}


# --- output ------------------------------------------------------------------


def header(cfg: RunConfig) -> str:
    return f"# ppflip {__version__} {cfg.to_text()}"


def render(cfg: RunConfig, res: Result, elapsed: float | None = None) -> str:
    if cfg.format == "json":
        doc = {
            "version": __version__,
            "config": cfg.to_text(),
            "columns": res.columns,
            "rows": [[_json_value(x) for x in row] for row in res.rows],
            "censored": res.censored,
        }
        if cfg.timing and elapsed is not None:
            doc["timing"] = {"seconds": elapsed}
        return json.dumps(doc) + "\n"
    buf = io.StringIO()
    buf.write(header(cfg) + "\n")
    buf.write(",".join(res.columns) + "\n")
    for row in res.rows:
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    return buf.getvalue()


def _json_value(x):
    if isinstance(x, (float, np.floating)):
        return _fmt(x) if not math.isfinite(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def run(cfg: RunConfig, stdout=None) -> int:
    """Execute ``cfg``, write its output and return the exit status."""
    stdout = sys.stdout if stdout is None else stdout
    t0 = time.perf_counter()
    try:
        res = DISPATCH[cfg.command](cfg)
    except CapExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CAP
    text = render(cfg, res, time.perf_counter() - t0)
    if cfg.output:
        with open(cfg.output, "w", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return EXIT_CENSORED if res.censored else EXIT_OK


# --- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ppflip", description="Biased plane-partition dynamics experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="file with key=value settings; command-line options override it")
    for key in sorted(KEYS - {"command"}):
        ap.add_argument("--" + key.replace("_", "-"), dest=key, metavar=key.upper())
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    text = ""
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
    tokens = [f"command={args.command}"]
    for key in sorted(KEYS - {"command"}):
        v = getattr(args, key)
        if v is not None:
            tokens.append(f"{key}={v}")
    try:
        cfg = parse_config(text + "\n" + " ".join(tokens))
    except ConfigError as e:
        for msg in e.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
