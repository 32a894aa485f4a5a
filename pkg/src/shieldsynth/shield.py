"""Runtime shield: backup gain, switching threshold, and program text.

A shield passes the policy's command ``c`` through unless it differs from
the backup command ``-K s`` by more than ``lambda``, in which case the backup
command is used instead.
"""

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericalError, ParseError
from .kernels import backend as _k

NORMS = {"linf": _k.NORM_LINF, "l2": _k.NORM_L2}


def _net(K):
    # displayed coefficients are the net -K; 0.0 - x never produces -0.0
    return 0.0 - K


@dataclass(frozen=True, eq=False)
class Shield:
    K: np.ndarray
    lam: float
    norm: str = "linf"
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        K = np.atleast_2d(np.array(getattr(self.K, "K", self.K), dtype=float))
        if not np.all(np.isfinite(K)):
            raise NumericalError("shield gain must be finite")
        lam = float(self.lam)
        if not (lam >= 0.0 and np.isfinite(lam)):
            raise ContractError(f"threshold must be finite and >= 0, got {self.lam}")
        if self.norm not in NORMS:
            raise ContractError(f"unknown norm {self.norm!r}; choose linf or l2")
        # for one output both norms are |c - k|; keep a single canonical form
        norm = "linf" if K.shape[0] == 1 else self.norm
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "norm", norm)
        object.__setattr__(self, "_flat", np.ascontiguousarray(K.ravel()))

    @property
    def state_dim(self):
        return self.K.shape[1]

    @property
    def command_dim(self):
        return self.K.shape[0]

    @property
    def norm_code(self):
        return NORMS[self.norm]

    @property
    def K_flat(self):
        return self._flat

    def __eq__(self, other):
        return (isinstance(other, Shield) and self.K.shape == other.K.shape
                and np.array_equal(self.K, other.K) and self.lam == other.lam
                and self.norm == other.norm)

    __hash__ = None

    def with_threshold(self, lam):
        return Shield(self.K, lam, self.norm, dict(self.provenance))

    def to_json(self):
        return {"K": self.K.tolist(), "lambda": self.lam, "norm": self.norm,
                "provenance": self.provenance}

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(obj["K"], obj["lambda"], obj.get("norm", "linf"), obj.get("provenance", {}))
        except (KeyError, TypeError) as exc:
            raise ContractError(f"malformed shield description: {exc}") from None

    def dumps(self):
        return json.dumps(self.to_json(), separators=(",", ":"))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def __call__(self, s, c):
        return shield_command(self, s, c)


def shield_command(sh, s, c):
    """Return ``(command, intervened)`` for state ``s`` and proposed command ``c``."""
    s = np.ascontiguousarray(s, dtype=float).ravel()
    c = np.ascontiguousarray(c, dtype=float).ravel()
    if s.shape[0] != sh.state_dim or c.shape[0] != sh.command_dim:
        raise ContractError(f"shield expects state {sh.state_dim} and command {sh.command_dim} entries")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(c))):
        raise NumericalError("shield inputs must be finite")
    kcmd = np.empty(sh.command_dim)
    hit = _k.shield_decide(sh.K_flat, sh.lam, sh.norm_code, s, c, kcmd)
    return (kcmd, True) if hit else (c, False)


# --- program text ---------------------------------------------------------

def _linear_expr(row):
    return " + ".join(f"{float(v)!r}*x{j + 1}" for j, v in enumerate(row))


def emit_program(sh):
    """Standalone program text for the shield (one function, no imports)."""
    m, n = sh.state_dim, sh.command_dim
    theta = _net(sh.K)
    args = ", ".join(f"x{j + 1}" for j in range(m))
    lines = [f"def shield(c, {args}):"]
    lam = repr(sh.lam)
    if n == 1:
        lines += [f"    K = {_linear_expr(theta[0])}",
                  f"    if abs(c - K) > {lam}:",
                  "        return K"]
    else:
        lines += [f"    K{k + 1} = {_linear_expr(theta[k])}" for k in range(n)]
        if sh.norm == "linf":
            cond = "max(" + ", ".join(f"abs(c[{k}] - K{k + 1})" for k in range(n)) + ")"
        else:
            cond = "(" + " + ".join(f"(c[{k}] - K{k + 1})**2" for k in range(n)) + ") ** 0.5"
        lines += [f"    if {cond} > {lam}:",
                  "        return [" + ", ".join(f"K{k + 1}" for k in range(n)) + "]"]
    lines.append("    return c")
    return "\n".join(lines) + "\n"


_NUM = r"[-+]?(?:\d+\.?\d*(?:[eE][-+]?\d+)?|inf|nan)"


class _Lines:
    def __init__(self, text):
        self.lines = text.split("\n")
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        self.i = 0

    def take(self, pattern, what, literal):
        """Match the next line; ``literal`` is its fixed leading text, used for columns."""
        if self.i >= len(self.lines):
            raise ParseError(f"expected {what}, found end of text", self.i + 1, 1)
        line = self.lines[self.i]
        m = re.fullmatch(pattern, line)
        if m is None:
            col = next((k for k, (a, b) in enumerate(zip(line, literal)) if a != b),
                       min(len(line), len(literal)))
            raise ParseError(f"expected {what}", self.i + 1, col + 1)
        self.i += 1
        return m

    def done(self):
        if self.i != len(self.lines):
            raise ParseError("unexpected text after the function", self.i + 1, 1)


def _coeffs(expr, m, lineno, col0):
    terms = expr.split(" + ")
    if len(terms) != m:
        raise ParseError(f"expected {m} terms, found {len(terms)}", lineno, col0)
    out = []
    col = col0
    for j, term in enumerate(terms):
        mt = re.fullmatch(rf"({_NUM})\*x{j + 1}", term)
        if mt is None:
            raise ParseError(f"expected '<number>*x{j + 1}'", lineno, col)
        out.append(float(mt.group(1)))
        col += len(term) + 3
    return out


def parse_program(text):
    """Rebuild a :class:`Shield` from text produced by :func:`emit_program`."""
    src = _Lines(text)
    head = src.take(r"def shield\(c((?:, x\d+)+)\):", "'def shield(c, x1, ...):'", "def shield(c, x")
    names = [a.strip() for a in head.group(1).split(",")[1:]]
    if names != [f"x{j + 1}" for j in range(len(names))]:
        raise ParseError("state arguments must be x1, x2, ... in order", 1, 13)
    m = len(names)
    single = re.match(r"    K = ", src.lines[1]) if len(src.lines) > 1 else None
    rows = []
    if single:
        mt = src.take(r"    K = (.*)", "linear expression", "    K = ")
        rows.append(_coeffs(mt.group(1), m, src.i, 9))
        mt = src.take(rf"    if abs\(c - K\) > ({_NUM}):", "'if abs(c - K) > <lambda>:'",
                        "    if abs(c - K) > ")
        lam = float(mt.group(1))
        src.take(r"        return K", "'return K'", "        return K")
        norm = "linf"
    else:
        k = 1
        while src.i < len(src.lines) and re.match(rf"    K{k} = ", src.lines[src.i]):
            mt = src.take(rf"    K{k} = (.*)", "linear expression", f"    K{k} = ")
            rows.append(_coeffs(mt.group(1), m, src.i, 9 + len(str(k))))
            k += 1
        n = len(rows)
        if n < 2:
            raise ParseError("expected 'K = ...' or 'K1 = ...'", src.i + 1, 5)
        linf = r"max\(" + ", ".join(rf"abs\(c\[{i}\] - K{i + 1}\)" for i in range(n)) + r"\)"
        l2 = r"\(" + r" \+ ".join(rf"\(c\[{i}\] - K{i + 1}\)\*\*2" for i in range(n)) + r"\) \*\* 0\.5"
        mt = src.take(rf"    if (?:({linf})|({l2})) > ({_NUM}):", "switching condition", "    if ")
        norm = "linf" if mt.group(1) else "l2"
        lam = float(mt.group(3))
        src.take(r"        return \[" + ", ".join(f"K{i + 1}" for i in range(n)) + r"\]",
                 "'return [K1, ...]'", "        return [K1")
    src.take(r"    return c", "'return c'", "    return c")
    src.done()
    theta = np.array(rows)
    try:
        return Shield(_net(theta), lam, norm)
    except (ContractError, NumericalError) as exc:
        raise ParseError(str(exc), 1, 1) from None
