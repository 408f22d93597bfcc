"""Problem files, regulator files and CSV output.

Matrices are JSON nested row arrays. Floats are written with ``repr`` so a
write/read round trip is exact.
"""
from __future__ import annotations

import csv
import io as _io
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import constants as C
from .errors import ConfigError, DimensionError
from .linalg import as_matrix
from .model import ExoSystem, PlantModel
from .synthesis import InternalModel, ObserverParams, RegulatorParams, StabilizerParams

EXAMPLES = ("example1", "example2")


@dataclass
class ProblemConfig:
    name: str
    plant: PlantModel
    exo: ExoSystem
    lam: float
    G1: np.ndarray | None = None
    G2: np.ndarray | None = None
    K: np.ndarray | None = None
    stabilizer: StabilizerParams | None = None
    beta_target: float | None = None
    D_zeta: np.ndarray | None = None
    gamma: float | str = "maximize"
    epsilon: float = C.LMI_EPS
    cert_tol: float = C.CERT_TOL
    horizon: float = 40.0
    output_dt: float = 0.05
    N: int = 200
    seed: int = 1
    x_p0: np.ndarray | None = None
    w0: np.ndarray | None = None
    published_gains: dict | None = None
    source: str = "<memory>"
    extra: dict = field(default_factory=dict)


class _Locator:
    """Maps field names to line numbers of the source text."""

    def __init__(self, text, source):
        self.lines = text.splitlines()
        self.source = source

    def line(self, key):
        pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
        for i, ln in enumerate(self.lines, 1):
            if pat.search(ln):
                return i
        return None

    def error(self, key, msg):
        ln = self.line(key.split(".")[-1])
        where = f"{self.source}:{ln}" if ln else self.source
        return ConfigError(f"{where}: field '{key}': {msg}")


def _get(d, key, loc, path, required=True, default=None):
    if key not in d:
        if required:
            raise loc.error(path.rstrip(".") or key, f"missing required field '{key}'")
        return default
    return d[key]


def _mat(d, key, loc, path, required=True, **shape):
    raw = _get(d, key, loc, path + key, required)
    if raw is None:
        return None
    try:
        return as_matrix(raw, key, **shape)
    except (DimensionError, ValueError, TypeError) as exc:
        raise loc.error(path + key, str(exc)) from None


def _num(d, key, loc, path, default=None, required=False, positive=False):
    raw = _get(d, key, loc, path + key, required, default)
    if raw is None:
        return None
    try:
        val = float(raw)
    except (TypeError, ValueError):
        raise loc.error(path + key, f"expected a number, got {raw!r}") from None
    if not np.isfinite(val) or (positive and val <= 0):
        raise loc.error(path + key, f"expected a positive finite number, got {raw!r}")
    return val


def parse_config_text(text, source="<string>") -> ProblemConfig:
    loc = _Locator(text, source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}:1: top level must be an object")

    pl = _get(doc, "plant", loc, "plant")
    A_p = _mat(pl, "A_p", loc, "plant.", square=True)
    n_p = A_p.shape[0]
    B_p = _mat(pl, "B_p", loc, "plant.", rows=n_p)
    E_p = _mat(pl, "E_p", loc, "plant.", rows=n_p)
    q = E_p.shape[1]
    C_p = _mat(pl, "C_p", loc, "plant.", cols=n_p)
    p = C_p.shape[0]
    F_p = _mat(pl, "F_p", loc, "plant.", rows=p, cols=q)
    ex = _get(doc, "exosystem", loc, "exosystem")
    S = _mat(ex, "S", loc, "exosystem.", rows=q, cols=q)
    samp = _get(doc, "sampling", loc, "sampling")
    lam = _num(samp, "lambda", loc, "sampling.", required=True, positive=True)

    cfg = ProblemConfig(name=str(doc.get("name", Path(source).stem)),
                        plant=PlantModel(A_p, B_p, E_p, C_p, F_p), exo=ExoSystem(S),
                        lam=lam, source=str(source))

    im = doc.get("internal_model", {}) or {}
    cfg.G1 = _mat(im, "G1", loc, "internal_model.", required=False, square=True)
    n_z = cfg.G1.shape[0] if cfg.G1 is not None else None
    cfg.G2 = _mat(im, "G2", loc, "internal_model.", required=False, rows=n_z, cols=p)
    if cfg.G1 is None and cfg.G2 is not None:
        n_z = cfg.G2.shape[0]
    cfg.K = _mat(im, "K", loc, "internal_model.", required=False, cols=n_z)

    has_stab = "stabilizer" in doc
    has_beta = "beta_target" in doc
    if has_stab == has_beta:
        key = "stabilizer" if has_stab else "beta_target"
        raise loc.error(key, "exactly one of 'stabilizer' and 'beta_target' must be given")
    m_p = B_p.shape[1]
    if has_stab:
        st = doc["stabilizer"]
        A_z = _mat(st, "A_zeta", loc, "stabilizer.", square=True)
        nz = A_z.shape[0]
        B_z = _mat(st, "B_zeta", loc, "stabilizer.", rows=nz)
        C_z = _mat(st, "C_zeta", loc, "stabilizer.", rows=m_p, cols=nz)
        D_z = _mat(st, "D_zeta", loc, "stabilizer.", rows=m_p, cols=B_z.shape[1])
        cfg.stabilizer = StabilizerParams(A_zeta=A_z, B_zeta=B_z, C_zeta=C_z, D_zeta=D_z)
    else:
        cfg.beta_target = _num(doc, "beta_target", loc, "", required=True, positive=True)
        cfg.D_zeta = _mat(doc, "D_zeta", loc, "", required=False, rows=m_p)

    lmi = doc.get("lmi", {}) or {}
    g = lmi.get("gamma", "maximize")
    if g == "maximize":
        cfg.gamma = "maximize"
    else:
        cfg.gamma = _num(lmi, "gamma", loc, "lmi.")
        if cfg.gamma < 0:
            raise loc.error("lmi.gamma", "must be non-negative or \"maximize\"")
    cfg.epsilon = _num(lmi, "epsilon", loc, "lmi.", default=C.LMI_EPS, positive=True)
    cfg.cert_tol = _num(lmi, "cert_tol", loc, "lmi.", default=C.CERT_TOL, positive=True)

    sim = doc.get("simulation", {}) or {}
    cfg.horizon = _num(sim, "horizon", loc, "simulation.", default=40.0, positive=True)
    cfg.output_dt = _num(sim, "output_dt", loc, "simulation.", default=0.05, positive=True)
    cfg.N = int(_num(sim, "N", loc, "simulation.", default=200))
    cfg.seed = int(_num(sim, "seed", loc, "simulation.", default=1))
    x_p0 = _mat(sim, "x_p0", loc, "simulation.", required=False, rows=n_p, cols=1)
    w0 = _mat(sim, "w0", loc, "simulation.", required=False, rows=q, cols=1)
    cfg.x_p0 = np.zeros(n_p) if x_p0 is None else x_p0.ravel()
    cfg.w0 = np.zeros(q) if w0 is None else w0.ravel()

    pg = doc.get("published_gains")
    if pg is not None:
        cfg.published_gains = {
            "Q": _mat(pg, "Q", loc, "published_gains.", cols=p),
            "W": _mat(pg, "W", loc, "published_gains.", rows=p, cols=p),
            "gamma": _num(pg, "gamma", loc, "published_gains.", required=True),
            "lambda": _num(pg, "lambda", loc, "published_gains.", required=True, positive=True),
        }
    return cfg


def parse_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    return parse_config_text(text, str(path))


def example_path(name):
    if name not in EXAMPLES:
        raise ValueError(f"unknown example {name!r}; choose from {EXAMPLES}")
    return resources.files("stochreg") / "data" / f"{name}.json"


def load_example(name) -> ProblemConfig:
    ref = example_path(name)
    return parse_config_text(ref.read_text(encoding="utf-8"), f"{name}.json")


def resolve_config(spec) -> ProblemConfig:
    """Accepts a path or the name of a shipped example."""
    if str(spec) in EXAMPLES and not Path(spec).exists():
        return load_example(str(spec))
    return parse_config(spec)


# regulator files

def _rows(m):
    return [[float(x) for x in row] for row in np.atleast_2d(m)]


def regulator_to_dict(reg: RegulatorParams, meta=None):
    im, st, ob = reg.internal_model, reg.stabilizer, reg.observer
    out = {
        "internal_model": {"G1": _rows(im.G1), "G2": _rows(im.G2), "K": _rows(im.K)},
        "stabilizer": {"A_zeta": _rows(st.A_zeta), "B_zeta": _rows(st.B_zeta),
                       "C_zeta": _rows(st.C_zeta), "D_zeta": _rows(st.D_zeta)},
        "observer": {"Q": _rows(ob.Q), "W": _rows(ob.W), "T": _rows(ob.T), "L1": _rows(ob.L1),
                     "L2": _rows(ob.L2), "H": _rows(ob.H), "H2": _rows(ob.H2)},
    }
    if meta:
        out["meta"] = meta
    return out


def dumps(obj):
    # json uses repr for floats, which round-trips exactly
    return json.dumps(obj, indent=1, allow_nan=True) + "\n"


def write_regulator(path, reg: RegulatorParams, meta=None):
    Path(path).write_text(dumps(regulator_to_dict(reg, meta)), encoding="utf-8")


def read_regulator(path):
    """Returns ``(RegulatorParams, meta)``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    loc = _Locator(text, str(path))
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    im = _get(doc, "internal_model", loc, "internal_model")
    st = _get(doc, "stabilizer", loc, "stabilizer")
    ob = _get(doc, "observer", loc, "observer")
    m = {}
    for sec, name, keys in (("internal_model.", im, ("G1", "G2", "K")),
                            ("stabilizer.", st, ("A_zeta", "B_zeta", "C_zeta", "D_zeta")),
                            ("observer.", ob, ("Q", "W", "T", "L1", "L2", "H", "H2"))):
        for k in keys:
            m[k] = _mat(name, k, loc, sec)
    reg = RegulatorParams(
        internal_model=InternalModel(G1=m["G1"], G2=m["G2"], K=m["K"]),
        stabilizer=StabilizerParams(A_zeta=m["A_zeta"], B_zeta=m["B_zeta"],
                                    C_zeta=m["C_zeta"], D_zeta=m["D_zeta"]),
        observer=ObserverParams(T=m["T"], L1=m["L1"], L2=m["L2"], H=m["H"], H2=m["H2"],
                                Q=m["Q"], W=m["W"]),
    )
    return reg, doc.get("meta", {})


# CSV

def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "infeasible"
    return repr(float(x))


def csv_text(header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, rows):
    # newline="" keeps the RFC 4180 CRLF terminators intact
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(header, rows))


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        r = list(csv.reader(fh))
    return r[0], r[1:]
