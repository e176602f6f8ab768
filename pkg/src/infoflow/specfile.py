"""JSON system definitions.

A spec is one JSON object::

    {"format_version": 1,
     "A": [[...], ...],            required, row-major
     "B": [[...]], "C": [[...]],   optional
     "sigma": 1.0,                 process-noise std
     "noise_var": [...],           optional per-state variances, overrides sigma
     "Sigma0": [[...]],            initial covariance, default identity
     "Sigma_u": [[...]], "Sigma_omega": [[...]],
     "noise": 1.0,                 feedback-loop noise variance
     "labels": ["x1", ...]}

Vectors are accepted for ``B`` (a column) and ``C`` (a row).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InfoflowError
from .gauss import CovarianceState, LinearSystem, SubspaceSelector

FORMAT_VERSION = 1
KNOWN_FIELDS = {
    "format_version", "A", "B", "C", "sigma", "noise_var", "Sigma0",
    "Sigma_u", "Sigma_omega", "noise", "labels", "description",
}


class SpecError(InfoflowError, ValueError):
    """Invalid system definition; the message names the offending field."""

    def __init__(self, message: str, field: str | None = None, source: str | None = None):
        self.field = field
        self.source = source
        where = ""
        if source:
            where += f"{source}: "
        if field:
            where += f"field '{field}': "
        super().__init__(where + message)


@dataclass(frozen=True, eq=False)
class SystemSpec:
    system: LinearSystem
    Sigma0: np.ndarray
    labels: tuple[str, ...]
    noise: float = 1.0
    Sigma0_given: bool = False
    digest: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def initial(self) -> CovarianceState:
        return CovarianceState(0, self.Sigma0)

    def selector(self, text: str) -> SubspaceSelector:
        return parse_selector(text, self.labels)


def _matrix(doc: dict, name: str, ndim_ok=(2,), src=None) -> np.ndarray | None:
    if name not in doc or doc[name] is None:
        return None
    try:
        M = np.array(doc[name], dtype=float)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"not a numeric array ({exc})", name, src) from None
    if M.ndim not in ndim_ok:
        raise SpecError(f"expected {' or '.join(f'{d}-D' for d in ndim_ok)} array, got {M.ndim}-D", name, src)
    if M.size == 0:
        raise SpecError("empty array", name, src)
    if not np.all(np.isfinite(M)):
        raise SpecError("non-finite entry", name, src)
    return M


def _scalar(doc: dict, name: str, default: float, src=None) -> float:
    value = doc.get(name, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecError(f"expected a number, got {value!r}", name, src)
    value = float(value)
    if not (np.isfinite(value) and value > 0):
        raise SpecError("must be positive and finite", name, src)
    return value


def spec_digest(doc: dict) -> str:
    """sha256 of the canonical JSON form of `doc`."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def parse_spec(doc, source: str | None = None) -> SystemSpec:
    """Validate a decoded JSON document and build the system."""
    if not isinstance(doc, dict):
        raise SpecError("top level must be a JSON object", source=source)
    version = doc.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise SpecError(f"unsupported version {version!r}", "format_version", source)
    unknown = sorted(set(doc) - KNOWN_FIELDS)
    if unknown:
        raise SpecError(f"unknown field(s) {', '.join(unknown)}", unknown[0], source)
    if "A" not in doc:
        raise SpecError("missing required matrix", "A", source)

    A = _matrix(doc, "A", src=source)
    if A.shape[0] != A.shape[1]:
        raise SpecError(f"must be square, got {A.shape[0]}x{A.shape[1]}", "A", source)
    N = A.shape[0]
    B = _matrix(doc, "B", (1, 2), source)
    C = _matrix(doc, "C", (1, 2), source)
    if B is not None and B.ndim == 1:
        B = B.reshape(-1, 1)
    if C is not None and C.ndim == 1:
        C = C.reshape(1, -1)
    if B is not None and B.shape[0] != N:
        raise SpecError(f"needs {N} rows, got {B.shape[0]}", "B", source)
    if C is not None and C.shape[1] != N:
        raise SpecError(f"needs {N} columns, got {C.shape[1]}", "C", source)

    sigma = _scalar(doc, "sigma", 1.0, source)
    noise = _scalar(doc, "noise", 1.0, source)
    noise_var = _matrix(doc, "noise_var", (1,), source)
    if noise_var is not None and noise_var.shape != (N,):
        raise SpecError(f"needs {N} entries, got {noise_var.shape[0]}", "noise_var", source)

    Sigma0 = _matrix(doc, "Sigma0", src=source)
    given = Sigma0 is not None
    if Sigma0 is None:
        Sigma0 = np.eye(N)
    elif Sigma0.shape != (N, N):
        raise SpecError(f"must be {N}x{N}, got {Sigma0.shape[0]}x{Sigma0.shape[1]}", "Sigma0", source)

    labels = doc.get("labels")
    if labels is None:
        labels = [f"x{i + 1}" for i in range(N)]
    if (
        not isinstance(labels, list)
        or len(labels) != N
        or not all(isinstance(s, str) and s and "," not in s for s in labels)
    ):
        raise SpecError(f"expected {N} nonempty strings without commas", "labels", source)
    if len(set(labels)) != N:
        raise SpecError("labels must be unique", "labels", source)

    kwargs = dict(
        A=A,
        B=B,
        C=C,
        sigma=sigma,
        noise_var=noise_var,
        Sigma_u=_matrix(doc, "Sigma_u", src=source),
        Sigma_omega=_matrix(doc, "Sigma_omega", src=source),
    )
    try:
        system = LinearSystem(**kwargs)
    except ValueError as exc:
        name = next((k for k in ("Sigma_u", "Sigma_omega") if k in str(exc)), None)
        raise SpecError(str(exc), name, source) from None
    try:
        state = CovarianceState(0, Sigma0)
    except ValueError as exc:
        raise SpecError(str(exc), "Sigma0", source) from None
    return SystemSpec(
        system=system,
        Sigma0=state.Sigma,
        labels=tuple(labels),
        noise=noise,
        Sigma0_given=given,
        digest=spec_digest(doc),
        raw=doc,
    )


def load_spec(path: str | Path) -> SystemSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read ({exc.strerror})", source=str(path)) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", source=str(path)) from None
    return parse_spec(doc, str(path))


def parse_selector(text: str, labels) -> SubspaceSelector:
    """Comma-separated labels or 0-based indices, e.g. ``"x1,x3"`` or ``"0,2"``."""
    labels = tuple(labels)
    lookup = {name: i for i, name in enumerate(labels)}
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            raise SpecError(f"empty entry in selector {text!r}")
        if part in lookup:
            out.append(lookup[part])
        elif part.isdigit() and int(part) < len(labels):
            out.append(int(part))
        else:
            raise SpecError(f"unknown state {part!r}; expected a label or an index below {len(labels)}")
    if len(set(out)) != len(out):
        raise SpecError(f"repeated state in selector {text!r}")
    return SubspaceSelector(tuple(out))


def selector_name(sel: SubspaceSelector, labels) -> str:
    return "+".join(labels[i] for i in sel.indices)
