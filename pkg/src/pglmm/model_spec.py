"""Model specification and compilation of a data table into design matrices.

A :class:`ModelSpec` names the columns playing each role (fixed effects,
random effects and their grouping unit, covariates interacting with the
latent clusters, continuous and categorical clustering covariates, outcome).
:func:`compile_data` turns a spec plus a table into a :class:`Dataset`.

Unit and observation indices are 0-based throughout the package.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    DanglingRandomEffect,
    DimensionMismatch,
    EmptyClusteringBlock,
    MissingColumn,
    NonBinaryOutcome,
    NonFiniteValue,
    SpecError,
    UnknownCategory,
)

LINEAR = "linear"
PROBIT = "probit"
_MODEL_LABELS = {LINEAR: "linear mixed model", PROBIT: "probit mixed model"}
INTERCEPT = "Intercept"


@dataclass(frozen=True)
class Intercepts:
    fe: bool = True
    re: bool = False
    lat: bool = True


@dataclass(frozen=True)
class ModelSpec:
    regression_type: str
    outcome: str
    n_clusters_max: int
    fe: tuple = ()
    re: tuple = ()
    re_unit: str = None
    lat: tuple = ()
    assign_cont: tuple = ()
    assign_cat: tuple = ()
    intercepts: Intercepts = field(default_factory=Intercepts)
    standardize: bool = False

    def __post_init__(self):
        for name in ("fe", "re", "lat", "assign_cont", "assign_cat"):
            val = getattr(self, name)
            if val is None:
                val = ()
            elif isinstance(val, str):
                val = (val,)
            object.__setattr__(self, name, tuple(val))
        if isinstance(self.intercepts, dict):
            object.__setattr__(self, "intercepts", Intercepts(**self.intercepts))
        object.__setattr__(self, "regression_type", str(self.regression_type).lower())
        self.validate()

    def validate(self):
        if self.regression_type not in (LINEAR, PROBIT):
            raise SpecError(f"regression_type must be 'linear' or 'probit', "
                            f"got {self.regression_type!r}")
        if not self.assign_cont and not self.assign_cat:
            raise EmptyClusteringBlock("at least one clustering covariate is required")
        if not self.fe and not self.intercepts.fe:
            raise SpecError("fixed effects are empty and the fixed-effect intercept is off")
        if not self.lat and not self.intercepts.lat:
            raise SpecError("cluster-interaction covariates are empty and the "
                            "cluster intercept is off")
        if self.has_random_effects and not self.re_unit:
            raise DanglingRandomEffect("random effects declared without re_unit")
        if int(self.n_clusters_max) < 2:
            raise SpecError("n_clusters_max must be at least 2")

    @property
    def has_random_effects(self):
        return bool(self.re) or self.intercepts.re

    @property
    def is_probit(self):
        return self.regression_type == PROBIT

    def to_dict(self):
        d = asdict(self)
        for k in ("fe", "re", "lat", "assign_cont", "assign_cat"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {"regression_type", "fe", "re", "re_unit", "lat", "assign_cont",
                 "assign_cat", "outcome", "n_clusters_max", "intercepts", "standardize"}
        unknown = set(d) - known
        if unknown:
            raise SpecError(f"unknown spec fields: {sorted(unknown)}")
        for req in ("regression_type", "outcome", "n_clusters_max"):
            if req not in d:
                raise SpecError(f"spec is missing required field {req!r}")
        d["n_clusters_max"] = int(d["n_clusters_max"])
        return cls(**d)


def load_spec(path):
    with open(path) as fh:
        return ModelSpec.from_dict(json.load(fh))


def read_table(path):
    """Read a CSV data file with a header row."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return pd.read_csv(path, float_precision="round_trip")


@dataclass
class Dataset:
    """Validated design matrices for one model.

    ``g`` maps observations to 0-based unit indices (first-appearance order),
    ``U_cat`` holds 0-based category codes with ``n_categories[j]`` levels in
    column ``j``.  A disabled random-effect block has ``X_re`` with zero
    columns and ``m == 0``.
    """

    n: int
    m: int
    y: np.ndarray
    X_fe: np.ndarray
    X_re: np.ndarray
    X_int: np.ndarray
    U_cont: np.ndarray
    U_cat: np.ndarray
    g: np.ndarray
    n_categories: list
    fe_names: list
    re_names: list
    int_names: list
    cont_names: list
    cat_names: list
    category_levels: list
    unit_labels: list
    scaling: dict

    @property
    def q_fe(self):
        return self.X_fe.shape[1]

    @property
    def q_re(self):
        return self.X_re.shape[1]

    @property
    def q_int(self):
        return self.X_int.shape[1]

    @property
    def q_uc(self):
        return self.U_cont.shape[1]

    @property
    def n_cat(self):
        return self.U_cat.shape[1]

    def meta(self):
        """JSON-safe description of everything needed to rebuild new-data designs."""
        return {
            "n": self.n,
            "m": self.m,
            "fe_names": list(self.fe_names),
            "re_names": list(self.re_names),
            "int_names": list(self.int_names),
            "cont_names": list(self.cont_names),
            "cat_names": list(self.cat_names),
            "n_categories": [int(k) for k in self.n_categories],
            "category_levels": [[_jsonable(v) for v in lv] for lv in self.category_levels],
            "scaling": {k: [float(a), float(b)] for k, (a, b) in self.scaling.items()},
        }


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def _numeric_column(table, name):
    if name not in table.columns:
        raise MissingColumn(name)
    col = pd.to_numeric(table[name], errors="coerce").to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(col))
    if bad.size:
        raise NonFiniteValue(int(bad[0]), name)
    return col


def _design(table, names, intercept, scaling, n):
    cols, labels = [], []
    if intercept:
        cols.append(np.ones(n))
        labels.append(INTERCEPT)
    for name in names:
        col = _numeric_column(table, name)
        if name in scaling:
            mean, sd = scaling[name]
            col = (col - mean) / sd
        cols.append(col)
        labels.append(name)
    mat = np.column_stack(cols) if cols else np.zeros((n, 0))
    return mat, labels


def _fit_scaling(spec, table):
    names = []
    for group in (spec.fe, spec.re, spec.lat, spec.assign_cont):
        names.extend(c for c in group if c not in names)
    scaling = {}
    for name in names:
        col = _numeric_column(table, name)
        sd = col.std()
        scaling[name] = (float(col.mean()), float(sd) if sd > 0 else 1.0)
    return scaling


def _encode_categories(table, name, levels=None):
    if name not in table.columns:
        raise MissingColumn(name)
    raw = table[name]
    if raw.isna().any():
        raise NonFiniteValue(int(np.flatnonzero(raw.isna().to_numpy())[0]), name)
    values = raw.tolist()
    if levels is None:
        if pd.api.types.is_integer_dtype(raw):
            # integer codes are taken literally and must be dense from 0
            if len(raw) and raw.min() < 0:
                raise SpecError(f"categorical column {name!r} has negative codes")
            k = int(raw.max()) + 1 if len(raw) else 0
            levels = list(range(k))
        else:
            levels = list(dict.fromkeys(values))
    index = {lv: i for i, lv in enumerate(levels)}
    try:
        codes = np.array([index[v] for v in values], dtype=np.int64)
    except KeyError as exc:
        raise UnknownCategory(f"level {exc.args[0]!r} of {name!r} not seen in training") from None
    return codes, levels


def compile_data(spec, table, scaling=None):
    """Build the :class:`Dataset` for ``spec`` from a table with named columns.

    Parameters
    ----------
    spec : ModelSpec
    table : pandas.DataFrame or mapping of column name to sequence
    scaling : dict, optional
        ``name -> (mean, sd)`` to apply; by default computed from ``table``
        when ``spec.standardize`` is set and empty otherwise.
    """
    if not isinstance(table, pd.DataFrame):
        table = pd.DataFrame(table)
    table = table.reset_index(drop=True)
    n = len(table)
    if scaling is None:
        scaling = _fit_scaling(spec, table) if spec.standardize else {}

    y = _numeric_column(table, spec.outcome)
    if spec.is_probit and not np.all((y == 0) | (y == 1)):
        raise NonBinaryOutcome(f"probit outcome {spec.outcome!r} must be 0/1")

    X_fe, fe_names = _design(table, spec.fe, spec.intercepts.fe, scaling, n)
    X_int, int_names = _design(table, spec.lat, spec.intercepts.lat, scaling, n)
    U_cont, _ = _design(table, spec.assign_cont, False, scaling, n)

    if spec.has_random_effects:
        X_re, re_names = _design(table, spec.re, spec.intercepts.re, scaling, n)
        if spec.re_unit not in table.columns:
            raise MissingColumn(spec.re_unit)
        units = table[spec.re_unit].tolist()
        unit_labels = list(dict.fromkeys(units))
        lookup = {u: j for j, u in enumerate(unit_labels)}
        g = np.array([lookup[u] for u in units], dtype=np.int64)
    else:
        X_re, re_names = np.zeros((n, 0)), []
        unit_labels = []
        g = np.zeros(n, dtype=np.int64)

    cat_codes, cat_levels = [], []
    for name in spec.assign_cat:
        codes, levels = _encode_categories(table, name)
        cat_codes.append(codes)
        cat_levels.append(levels)
    U_cat = np.column_stack(cat_codes) if cat_codes else np.zeros((n, 0), dtype=np.int64)

    return Dataset(
        n=n, m=len(unit_labels), y=y, X_fe=X_fe, X_re=X_re, X_int=X_int,
        U_cont=U_cont, U_cat=U_cat, g=g,
        n_categories=[len(lv) for lv in cat_levels],
        fe_names=fe_names, re_names=re_names, int_names=int_names,
        cont_names=list(spec.assign_cont), cat_names=list(spec.assign_cat),
        category_levels=cat_levels, unit_labels=unit_labels,
        scaling=dict(scaling),
    )


@dataclass
class NewData:
    """Design matrices for out-of-sample prediction (no outcome, no units)."""

    X_fe: np.ndarray
    X_int: np.ndarray
    U_cont: np.ndarray
    U_cat: np.ndarray


def compile_new_data(spec, meta, table):
    """Build prediction designs for ``table`` reusing a training dataset's ``meta()``."""
    if not isinstance(table, pd.DataFrame):
        table = pd.DataFrame(table)
    table = table.reset_index(drop=True)
    n = len(table)
    scaling = {k: tuple(v) for k, v in meta.get("scaling", {}).items()}
    X_fe, fe_names = _design(table, spec.fe, spec.intercepts.fe, scaling, n)
    X_int, int_names = _design(table, spec.lat, spec.intercepts.lat, scaling, n)
    U_cont, _ = _design(table, spec.assign_cont, False, scaling, n)
    if fe_names != meta["fe_names"] or int_names != meta["int_names"]:
        raise DimensionMismatch("new-data designs do not match the training designs")
    codes = []
    for name, levels in zip(spec.assign_cat, meta["category_levels"]):
        c, _ = _encode_categories(table, name, levels=list(levels))
        codes.append(c)
    U_cat = np.column_stack(codes) if codes else np.zeros((n, 0), dtype=np.int64)
    return NewData(X_fe=X_fe, X_int=X_int, U_cont=U_cont, U_cat=U_cat)


def summarize(spec, data):
    """Human-readable model summary, one field per line."""
    def names(xs):
        return " ".join(xs)

    lines = [
        "--- pglmm Data summary ---",
        f"- Number of observations : {data.n}",
        "",
        "-- Clustering model summary --",
    ]
    if data.cont_names:
        lines.append(f"- Continuous clustering variables : ' {names(data.cont_names)} '")
    if data.cat_names:
        lines.append(f"- Categorical clustering variables : ' {names(data.cat_names)} '")
    lines += [
        "",
        "-- Outcome model summary --",
        f"- Model type: {_MODEL_LABELS[spec.regression_type]}",
        f"- Outcome : ' {spec.outcome} '",
        f"- Fixed effects : ' {names(data.fe_names)} '",
    ]
    if spec.has_random_effects:
        lines.append(f"- ' {spec.re_unit} ' level random effects : ' {names(data.re_names)} '")
    lines.append(f"- Latent clusters interacting with: ' {names(data.int_names)} '")
    return "\n".join(lines)
