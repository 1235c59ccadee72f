"""Experiment configuration for the command-line driver.

Config files are INI-style: ``[section]`` headers followed by ``key = value``
lines, ``#`` or ``;`` comments.  Sections only group keys; every key must be
one of the :class:`ExperimentConfig` fields.  Example::

    [state]
    state = coherent(3, pi/4)

    [experiment]
    lambda_tau = 0.04
    n = 300
    N = 1000
    phases = -3*pi/4
    master_seed = 1

Angles and lists accept arithmetic on ``pi`` (``-3*pi/4``, ``17*pi/32``);
lists are comma separated.  State specs::

    vacuum | coherent(ABS, PHASE) | fock(K) | mixed(W1: SPEC; W2: SPEC; ...)
"""
from __future__ import annotations

import ast
import configparser
import math
import operator
import re
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .fock import DensityMatrix, StateVector, coherent_state, default_dim, fock_state, mixture

_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


def parse_number(text: str) -> float:
    """Evaluate a small arithmetic expression that may use ``pi``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {text!r}")

    return ev(ast.parse(text.strip().replace("π", "pi"), mode="eval"))


def parse_list(text: str) -> list[float]:
    return [parse_number(t) for t in text.split(",") if t.strip()]


@dataclass(frozen=True)
class StateSpec:
    kind: str
    beta_abs: float = 0.0
    Phi: float = 0.0
    k: int = 0
    parts: tuple = ()

    @property
    def is_coherent(self) -> bool:
        return self.kind in ("coherent", "vacuum")

    def max_amplitude(self) -> float:
        if self.kind == "mixed":
            return max(p.max_amplitude() for _, p in self.parts)
        if self.kind == "fock":
            return math.sqrt(self.k)
        return self.beta_abs

    def needed_dim(self) -> int:
        if self.kind == "fock":
            return max(2, self.k + 1)
        if self.kind == "mixed":
            return max(p.needed_dim() for _, p in self.parts)
        return default_dim(self.beta_abs)

    def build(self, dim: int | None = None) -> StateVector | DensityMatrix:
        d = dim or self.needed_dim()
        if self.kind == "vacuum":
            return fock_state(0, d)
        if self.kind == "coherent":
            return coherent_state(self.beta_abs * complex(math.cos(self.Phi), math.sin(self.Phi)), d)
        if self.kind == "fock":
            return fock_state(self.k, d)
        return mixture([w for w, _ in self.parts], [p.build(d) for _, p in self.parts])


_CALL = re.compile(r"^\s*(\w+)\s*(?:\((.*)\))?\s*$", re.S)


def _split_top(text: str, sep: str) -> list[str]:
    out, depth, cur = [], 0, ""
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    out.append(cur)
    return [s.strip() for s in out if s.strip()]


def parse_state(text: str) -> StateSpec:
    match = _CALL.match(text)
    if not match:
        raise ValueError(f"cannot parse state {text!r}")
    kind, args = match.group(1).lower(), match.group(2)
    if kind == "vacuum":
        return StateSpec("vacuum")
    if kind == "coherent":
        vals = parse_list(args or "")
        if len(vals) not in (1, 2) or vals[0] < 0:
            raise ValueError("coherent(ABS[, PHASE]) needs ABS >= 0")
        return StateSpec("coherent", beta_abs=vals[0], Phi=vals[1] if len(vals) == 2 else 0.0)
    if kind == "fock":
        k = parse_number(args or "")
        if k != int(k) or k < 0:
            raise ValueError("fock(K) needs a nonnegative integer")
        return StateSpec("fock", k=int(k))
    if kind == "mixed":
        parts = []
        for item in _split_top(args or "", ";"):
            w, _, spec = item.partition(":")
            parts.append((parse_number(w), parse_state(spec)))
        if not parts:
            raise ValueError("mixed(...) needs at least one component")
        return StateSpec("mixed", parts=tuple(parts))
    raise ValueError(f"unknown state kind {kind!r}")


FIG3_OFFSETS = (0.0, math.pi / 4, math.pi / 2, 17 * math.pi / 32, math.pi)


@dataclass(frozen=True)
class ExperimentConfig:
    state: str = "coherent(3, pi/4)"
    lambda_tau: float = 0.04
    n: int = 300
    N: int = 1000
    phases: tuple = (-3 * math.pi / 4,)
    phase_offsets: tuple = FIG3_OFFSETS
    alpha: float = 0.95
    beta_max: float = 3.0
    gamma_mode: str = "unity"
    mu: float | None = None
    master_seed: int = 0
    dim: int | None = None
    mu_step: float = 0.01
    grid_h: float = 0.05
    grid_half_width: float | None = None
    epsilon: float = 1e-4
    beta_points: int = 61
    n_tracks: int = 5
    sweep_n: tuple = (300, 400, 500, 600, 700, 800, 900, 1000)
    sweep_seeds: int = 5
    workers: int = 1
    chunk_size: int = 1000

    def __post_init__(self):
        if self.lambda_tau <= 0:
            raise ValueError("lambda_tau must be positive")
        if self.n < 1 or self.N < 1:
            raise ValueError("n and N must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.gamma_mode not in ("series", "approx", "unity"):
            raise ValueError(f"gamma_mode must be series, approx or unity, not {self.gamma_mode!r}")
        if not self.phases:
            raise ValueError("need at least one phase")
        parse_state(self.state)

    @property
    def state_spec(self) -> StateSpec:
        return parse_state(self.state)

    def coupling_product(self) -> float:
        """beta_max * lambda_tau; the method needs it small."""
        return self.beta_max * self.lambda_tau

    def resolved_dim(self) -> int:
        return self.dim or max(self.state_spec.needed_dim(), default_dim(self.beta_max))

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("phases", "phase_offsets", "sweep_n"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        for key in ("phases", "phase_offsets", "sweep_n"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)

    def updated(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


_INT_KEYS = {"n", "N", "master_seed", "dim", "beta_points", "n_tracks", "sweep_seeds", "workers", "chunk_size"}
_LIST_KEYS = {"phases", "phase_offsets"}


def coerce_value(key: str, raw: str):
    raw = raw.strip()
    if key == "state" or key == "gamma_mode":
        return raw
    if key in _LIST_KEYS:
        return tuple(parse_list(raw))
    if key == "sweep_n":
        return tuple(int(v) for v in parse_list(raw))
    if raw.lower() in ("", "none", "auto"):
        return None
    if key in _INT_KEYS:
        value = parse_number(raw)
        if value != int(value):
            raise ValueError(f"{key} must be an integer")
        return int(value)
    return parse_number(raw)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in known:
                raise ValueError(f"{path}: unknown key {key!r} in [{section}]")
            values[key] = coerce_value(key, raw)
    return replace(base or ExperimentConfig(), **values)


PRESETS = {
    "fig3": dict(state="coherent(3, pi/4)", phases=(-3 * math.pi / 4,)),
    "fig4": dict(state="coherent(3, pi/4)", n=300, mu=0.76),
    "fig5": dict(state="coherent(3, pi/4)", n=300, N=1000, phases=(-3 * math.pi / 4,)),
    "fig6": dict(state="coherent(3, pi/4)", n=300, N=1000, mu=0.76, phases=(-3 * math.pi / 4,)),
    "fig7": dict(state="coherent(3, pi/4)", N=1000, phases=(-3 * math.pi / 4,)),
    "fig8": dict(state="fock(1)", n=1000, N=1000, mu=0.36, phases=(-3 * math.pi / 4,)),
    "oracle": dict(state="vacuum", n=5, N=100000),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return ExperimentConfig(**PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def phase_seed(master_seed: int, index: int) -> int:
    """Master seed of the ensemble taken at the ``index``-th phase of a tomogram."""
    if index == 0:
        return master_seed
    return int(np.random.SeedSequence(master_seed, spawn_key=(0x70686173, index)).generate_state(1, np.uint64)[0])
