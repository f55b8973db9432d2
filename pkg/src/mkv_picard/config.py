"""TOML run configuration: parsing, validation, normalization and problem construction.

Layout::

    [problem]            dimension, horizon
    [problem.diffusion]  sigma (d x q' matrix)
    [problem.drift]      type = "constant_trig"; A, w, v
    [problem.jumps]      type = "none" | "double_exponential"; intensity, lambda1, lambda2, p
    [problem.initial_law] type = "laplace" | "gaussian" | "point_mass" | "stable"; family parameters
    [picard]             n, m_rule, lam, psi_path, gamma0_A, gamma0_b, stop_tol
    [picard.quadrature]  radius, nodes_per_axis, rule, tol
    [picard.damping]     mode, h
    [output]             csv, trajectory, verbosity, timings

Unknown keys are errors. Parsing fills every default, so the stored form
is normalized and ``loads(cfg.dumps()) == cfg``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import tomli
import tomli_w

from .model import (
    ConstantATrigB,
    DoubleExponentialJumps,
    LevyTriplet,
    Problem,
    gaussian_law,
    point_mass_law,
    product_laplace_law,
    stable_law,
    trig_spectral,
)
from .psi_map import PATHS, DampingSpec, QuadratureSpec
from .picard import PicardConfig, default_iterations

LAW_TYPES = ("laplace", "gaussian", "point_mass", "stable")
JUMP_TYPES = ("none", "double_exponential")

_SCHEMA: dict[str, Any] = {
    "problem": {
        "dimension": None,
        "horizon": None,
        "diffusion": {"sigma": None},
        "drift": {"type": None, "A": None, "w": None, "v": None},
        "jumps": {"type": None, "intensity": None, "lambda1": None, "lambda2": None, "p": None},
        "initial_law": {"type": None, "mean": None, "cov": None, "point": None, "shift": None, "scale": None},
    },
    "picard": {
        "n": None,
        "m_rule": None,
        "lam": None,
        "psi_path": None,
        "gamma0_A": None,
        "gamma0_b": None,
        "stop_tol": None,
        "quadrature": {"radius": None, "nodes_per_axis": None, "rule": None, "tol": None},
        "damping": {"mode": None, "h": None},
    },
    "output": {"csv": None, "trajectory": None, "verbosity": None, "timings": None},
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def _unknown_keys(data: Any, schema: dict, prefix: str = "") -> list[str]:
    errors = []
    if not isinstance(data, dict):
        return [f"{prefix or 'config'}: expected a table"]
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in schema:
            errors.append(f"unknown key {path!r}")
        elif isinstance(schema[key], dict):
            errors.extend(_unknown_keys(value, schema[key], path))
    return errors


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x)


def _matrix(x, shape_rows: int, name: str, errors: list, square: bool = False):
    try:
        arr = np.array(x, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{name}: expected a numeric matrix")
        return None
    if arr.ndim != 2 or arr.shape[0] != shape_rows or (square and arr.shape[1] != shape_rows):
        errors.append(f"{name}: expected shape ({shape_rows}, {shape_rows if square else 'k'}), got {arr.shape}")
        return None
    if not np.all(np.isfinite(arr)):
        errors.append(f"{name}: non-finite entries")
        return None
    return arr


def _vector(x, length: int, name: str, errors: list):
    try:
        arr = np.array(x, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{name}: expected a numeric vector")
        return None
    if arr.shape != (length,):
        errors.append(f"{name}: expected length {length}, got shape {arr.shape}")
        return None
    if not np.all(np.isfinite(arr)):
        errors.append(f"{name}: non-finite entries")
        return None
    return arr


def _tolist(a) -> list:
    return np.asarray(a, dtype=float).tolist()


@dataclass(frozen=True)
class RunConfig:
    """Validated, normalized configuration (a plain nested dict underneath)."""

    data: dict

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        errors = _unknown_keys(raw, _SCHEMA)
        if errors:
            raise ConfigError(errors)
        data = _normalize(copy.deepcopy(raw), errors)
        if errors:
            raise ConfigError(errors)
        return cls(data)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError([f"TOML parse error: {exc}"]) from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError([f"cannot read {path}: {exc}"]) from exc
        return cls.loads(text)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def dumps(self) -> str:
        return tomli_w.dumps(_drop_none(self.data))

    # -- derived objects -----------------------------------------------------

    def problem(self) -> Problem:
        p = self.data["problem"]
        d = p["dimension"]
        jumps = p["jumps"]
        jump = None
        if jumps["type"] == "double_exponential":
            jump = DoubleExponentialJumps(jumps["intensity"], jumps["lambda1"], jumps["lambda2"], jumps["p"])
        triplet = LevyTriplet(np.array(p["diffusion"]["sigma"]), jump)
        law_cfg = p["initial_law"]
        kind = law_cfg["type"]
        if kind == "laplace":
            law = product_laplace_law(d)
        elif kind == "gaussian":
            law = gaussian_law(law_cfg["mean"], law_cfg["cov"])
        elif kind == "point_mass":
            law = point_mass_law(law_cfg["point"])
        else:
            law = stable_law(d, law_cfg["shift"], law_cfg["scale"])
        dr = p["drift"]
        drift = ConstantATrigB(np.array(dr["A"]), np.array(dr["w"]), np.array(dr["v"]))
        path = self.data["picard"]["psi_path"]
        if path != "trig":
            drift = trig_spectral(drift, damped=(path == "damped"))
        return Problem(triplet, law, drift, p["horizon"])

    @property
    def n_values(self) -> list[int]:
        return list(self.data["picard"]["n"])

    def m_for(self, n: int) -> int:
        rule = self.data["picard"]["m_rule"]
        return default_iterations(n) if rule == "log2" else int(rule)

    def picard_config(self, n: int) -> PicardConfig:
        pc = self.data["picard"]
        q = pc["quadrature"]
        quad = QuadratureSpec(q.get("radius"), q.get("nodes_per_axis"), q["rule"], q["tol"])
        damp = None
        if pc["psi_path"] == "damped":
            damp = DampingSpec.for_dim(self.data["problem"]["dimension"], pc["damping"]["mode"], pc["damping"]["h"])
        gamma0 = None
        if pc.get("gamma0_A") is not None:
            gamma0 = (np.array(pc["gamma0_A"]), np.array(pc["gamma0_b"]))
        return PicardConfig(n_steps=n, max_iters=self.m_for(n), gamma0=gamma0, lam=pc["lam"],
                            psi_path=pc["psi_path"], quad=quad, damp=damp, stop_tol=pc.get("stop_tol"))

    @property
    def output(self) -> dict:
        return dict(self.data["output"])


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    return d


def _normalize(raw: dict, errors: list) -> dict:
    prob = raw.get("problem")
    if not isinstance(prob, dict):
        errors.append("missing [problem] table")
        return {}
    d = prob.get("dimension")
    if not (isinstance(d, int) and not isinstance(d, bool) and d >= 1):
        errors.append("problem.dimension must be a positive integer")
        return {}
    horizon = prob.get("horizon", 1.0)
    if not (_is_number(horizon) and horizon > 0):
        errors.append("problem.horizon must be a positive number")

    sigma = _matrix(prob.get("diffusion", {}).get("sigma", np.eye(d).tolist()), d, "problem.diffusion.sigma", errors)

    dr = prob.get("drift", {})
    if dr.get("type", "constant_trig") != "constant_trig":
        errors.append("problem.drift.type must be 'constant_trig'")
    A = _matrix(dr.get("A", np.zeros((d, d)).tolist()), d, "problem.drift.A", errors, square=True)
    w = _vector(dr.get("w", [1.0] * d), d, "problem.drift.w", errors)
    v = _vector(dr.get("v", [1.0] * d), d, "problem.drift.v", errors)

    jumps = prob.get("jumps", {})
    jtype = jumps.get("type", "none")
    jnorm: dict = {"type": jtype}
    if jtype not in JUMP_TYPES:
        errors.append(f"problem.jumps.type must be one of {JUMP_TYPES}")
    elif jtype == "double_exponential":
        if d != 1:
            errors.append("double_exponential jumps need dimension 1")
        for key in ("intensity", "lambda1", "lambda2", "p"):
            val = jumps.get(key)
            if not _is_number(val):
                errors.append(f"problem.jumps.{key} must be a number")
            jnorm[key] = float(val) if _is_number(val) else val
        if not errors:
            if jnorm["intensity"] < 0 or jnorm["lambda1"] <= 0 or jnorm["lambda2"] <= 0:
                errors.append("problem.jumps: need intensity >= 0 and lambda1, lambda2 > 0")
            if not 0 <= jnorm["p"] <= 1:
                errors.append("problem.jumps.p must lie in [0, 1]")
    else:
        extra = [k for k in jumps if k != "type"]
        if extra:
            errors.append(f"problem.jumps: parameters {extra} given for type 'none'")

    law = prob.get("initial_law", {})
    ltype = law.get("type", "laplace")
    lnorm: dict = {"type": ltype}
    if ltype not in LAW_TYPES:
        errors.append(f"problem.initial_law.type must be one of {LAW_TYPES}")
    elif ltype == "gaussian":
        mean = _vector(law.get("mean", [0.0] * d), d, "problem.initial_law.mean", errors)
        cov = _matrix(law.get("cov", np.eye(d).tolist()), d, "problem.initial_law.cov", errors, square=True)
        if cov is not None and (not np.allclose(cov, cov.T) or np.linalg.eigvalsh(0.5 * (cov + cov.T))[0] < 0):
            errors.append("problem.initial_law.cov must be symmetric positive semidefinite")
        lnorm.update(mean=None if mean is None else _tolist(mean), cov=None if cov is None else _tolist(cov))
    elif ltype == "point_mass":
        point = _vector(law.get("point", [0.0] * d), d, "problem.initial_law.point", errors)
        lnorm["point"] = None if point is None else _tolist(point)
    elif ltype == "stable":
        shift = _vector(law.get("shift", [1.0] * d), d, "problem.initial_law.shift", errors)
        scale = law.get("scale", 1.0)
        if not (_is_number(scale) and scale > 0):
            errors.append("problem.initial_law.scale must be positive")
        lnorm.update(shift=None if shift is None else _tolist(shift), scale=float(scale) if _is_number(scale) else scale)
    allowed = {"laplace": set(), "gaussian": {"mean", "cov"}, "point_mass": {"point"},
               "stable": {"shift", "scale"}}.get(ltype, set())
    stray = [k for k in law if k != "type" and k not in allowed]
    if stray:
        errors.append(f"problem.initial_law: parameters {stray} do not apply to type {ltype!r}")

    pic = raw.get("picard", {})
    n_list = pic.get("n", [2**k for k in range(4, 9)])
    if isinstance(n_list, int) and not isinstance(n_list, bool):
        n_list = [n_list]
    if not (isinstance(n_list, list) and n_list and all(isinstance(n, int) and not isinstance(n, bool) and n >= 1
                                                         for n in n_list)):
        errors.append("picard.n must be a positive integer or a non-empty list of them")
        n_list = []
    m_rule = pic.get("m_rule", "log2")
    if not (m_rule == "log2" or (isinstance(m_rule, int) and not isinstance(m_rule, bool) and m_rule >= 1)):
        errors.append("picard.m_rule must be 'log2' or a positive integer")
    lam = pic.get("lam", 0.0)
    if not (_is_number(lam) and lam >= 0):
        errors.append("picard.lam must be a nonnegative number")
    path = pic.get("psi_path", "trig")
    if path not in PATHS:
        errors.append(f"picard.psi_path must be one of {PATHS}")
    elif path != "trig" and d > 3:
        errors.append("Fourier quadrature paths support dimension <= 3")
    elif path == "damped" and d != 1:
        errors.append("the damped path for trigonometric drifts is available in dimension 1")
    if path == "damped" and ltype == "stable":
        errors.append("the stable initial law has no derivative data; damped path unavailable")
    g_a, g_b = pic.get("gamma0_A"), pic.get("gamma0_b")
    if (g_a is None) != (g_b is None):
        errors.append("picard.gamma0_A and picard.gamma0_b go together")
    elif g_a is not None:
        g_a = _matrix(g_a, d, "picard.gamma0_A", errors, square=True)
        g_b = _vector(g_b, d, "picard.gamma0_b", errors)
        if g_a is not None and g_b is not None and A is not None and v is not None:
            radius = np.linalg.norm(A, 2) + np.linalg.norm(v)
            if max(np.linalg.norm(g_a, 2), np.linalg.norm(g_b)) > radius + 1e-12:
                errors.append("picard.gamma0 lies outside the ball |a|_inf + |b|_inf")
    stop = pic.get("stop_tol")
    if stop is not None and not (_is_number(stop) and stop > 0):
        errors.append("picard.stop_tol must be positive")

    quad = pic.get("quadrature", {})
    qn = {"radius": quad.get("radius"), "nodes_per_axis": quad.get("nodes_per_axis"),
          "rule": quad.get("rule", "gauss_legendre"), "tol": quad.get("tol", 1e-12)}
    if qn["radius"] is not None and not (_is_number(qn["radius"]) and qn["radius"] > 0):
        errors.append("picard.quadrature.radius must be positive")
    npa = qn["nodes_per_axis"]
    if npa is not None and not (isinstance(npa, int) and not isinstance(npa, bool) and npa >= 2):
        errors.append("picard.quadrature.nodes_per_axis must be an integer >= 2")
    elif npa is not None and npa**d > (1 << 24):
        errors.append(f"picard.quadrature: {npa}^{d} nodes exceed the budget of 2^24")
    if qn["rule"] not in ("trapezoid", "gauss_legendre"):
        errors.append("picard.quadrature.rule must be 'trapezoid' or 'gauss_legendre'")
    if not (_is_number(qn["tol"]) and 0 < qn["tol"] < 1):
        errors.append("picard.quadrature.tol must lie in (0, 1)")

    damp = pic.get("damping", {})
    dn = {"mode": damp.get("mode", "analytic_leibniz"), "h": damp.get("h", 1e-2)}
    if dn["mode"] not in ("analytic_leibniz", "finite_difference"):
        errors.append("picard.damping.mode must be 'analytic_leibniz' or 'finite_difference'")
    if not (_is_number(dn["h"]) and dn["h"] > 0):
        errors.append("picard.damping.h must be positive")

    out = raw.get("output", {})
    on = {"csv": out.get("csv"), "trajectory": out.get("trajectory"),
          "verbosity": out.get("verbosity", 0), "timings": out.get("timings", False)}
    for key in ("csv", "trajectory"):
        if on[key] is not None and not isinstance(on[key], str):
            errors.append(f"output.{key} must be a path string")
    if not (isinstance(on["verbosity"], int) and not isinstance(on["verbosity"], bool) and on["verbosity"] >= 0):
        errors.append("output.verbosity must be a nonnegative integer")
    if not isinstance(on["timings"], bool):
        errors.append("output.timings must be a boolean")

    if sigma is not None and sigma.shape[0] == d:
        theta = sigma @ sigma.T
        if np.linalg.eigvalsh(theta)[0] <= 0:
            errors.append("problem.diffusion.sigma: theta = sigma sigma^T is not positive definite")

    if errors:
        return {}
    return {
        "problem": {
            "dimension": d,
            "horizon": float(horizon),
            "diffusion": {"sigma": _tolist(sigma)},
            "drift": {"type": "constant_trig", "A": _tolist(A), "w": _tolist(w), "v": _tolist(v)},
            "jumps": jnorm,
            "initial_law": lnorm,
        },
        "picard": {
            "n": sorted(set(int(n) for n in n_list)),
            "m_rule": m_rule,
            "lam": float(lam),
            "psi_path": path,
            "gamma0_A": None if g_a is None else _tolist(g_a),
            "gamma0_b": None if g_b is None else _tolist(g_b),
            "stop_tol": None if stop is None else float(stop),
            "quadrature": {"radius": None if qn["radius"] is None else float(qn["radius"]),
                           "nodes_per_axis": npa, "rule": qn["rule"], "tol": float(qn["tol"])},
            "damping": {"mode": dn["mode"], "h": float(dn["h"])},
        },
        "output": on,
    }
