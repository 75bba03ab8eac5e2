"""Trace-based single-site Metropolis-Hastings and enumerative Gibbs.

A model is a fixed, finite bank of addressed random choices with
independent priors, a deterministic renderer from choice values to some
render output, and a log-likelihood of the observed data given that output
(and the choice values, which carry the fidelity/tolerance controls).

Every MH proposal resimulates one uniformly chosen choice from its prior.
The acceptance ratio is computed in full (likelihood, prior and proposal
terms); with prior proposals the prior and proposal terms cancel, which
``MHProposal`` exposes so callers can check it.
"""

from __future__ import annotations

import csv
import functools
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .dists import NEG_INF, log_density, sample_prior
from .errors import ConfigError, ModelError, UsageError

_SEGMENT = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)|\[(\d+)\]")


@functools.total_ordering
@dataclass(frozen=True)
class Address:
    """Path of name/index segments, e.g. ``glyph[3].pos_x``."""

    path: tuple

    def __str__(self):
        out = []
        for seg in self.path:
            if isinstance(seg, int):
                out.append(f"[{seg}]")
            else:
                out.append(("." if out else "") + seg)
        return "".join(out)

    def __repr__(self):
        return f"Address({str(self)!r})"

    def _key(self):
        return tuple((0, s, "") if isinstance(s, int) else (1, 0, s) for s in self.path)

    def __lt__(self, other):
        if not isinstance(other, Address):
            return NotImplemented
        return self._key() < other._key()

    @property
    def name(self):
        """Last named segment (``pos_x`` for ``glyph[3].pos_x``)."""
        return self.path[-1]

    @property
    def index(self):
        """First integer segment, or None."""
        for seg in self.path:
            if isinstance(seg, int):
                return seg
        return None

    @classmethod
    def parse(cls, text):
        segs = []
        for part in text.split("."):
            m_all = list(_SEGMENT.finditer(part))
            if not m_all or "".join(m.group(0) for m in m_all) != part:
                raise UsageError(f"malformed address {text!r}")
            for m in m_all:
                segs.append(m.group(1) if m.group(1) is not None else int(m.group(2)))
        return cls(tuple(segs))


def addr(*path):
    return Address(tuple(path))


@dataclass(frozen=True, slots=True)
class ChoiceRecord:
    value: Any
    dist: Any
    log_prior: float


@dataclass(frozen=True)
class Trace:
    """Complete record of one execution: choices plus cached render/likelihood.

    Traces are treated as immutable; steps return new traces that share
    unchanged records with their parent.
    """

    choices: Mapping[Address, ChoiceRecord]
    render: Any
    loglik: float
    log_prior: float

    def values(self):
        return {a: r.value for a, r in self.choices.items()}

    def __getitem__(self, address):
        if isinstance(address, str):
            address = Address.parse(address)
        return self.choices[address].value

    def replace(self, address, value, render, loglik):
        old = self.choices[address]
        rec = ChoiceRecord(value, old.dist, log_density(old.dist, value))
        choices = dict(self.choices)
        choices[address] = rec
        return Trace(choices, render, loglik, self.log_prior - old.log_prior + rec.log_prior)

    def recompute_log_prior(self):
        return math.fsum(r.log_prior for r in self.choices.values())


# (loglik, thunk producing the render output) for one candidate value
Scored = tuple[float, Callable[[], Any]]


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A scene program: priors, renderer and likelihood.

    ``render(values)`` and ``loglik(render_output, data, values)`` must be
    deterministic. ``render_addresses`` (when given) lists the only choices
    the renderer reads, so proposals to the others reuse the cached render.
    ``rescore(trace, data, address, values)`` is an optional fast path that
    must return exactly what the generic render/loglik path would.
    """

    dists: Mapping[Address, Any]
    render: Callable[[Mapping[Address, Any]], Any]
    loglik: Callable[[Any, Any, Mapping[Address, Any]], float]
    data: Any = None
    render_addresses: frozenset | None = None
    rescore: Callable[..., list] | None = None
    name: str = "model"
    meta: Any = None
    recompute_on_accept: bool = False
    """Recompute the likelihood of accepted states from scratch (for
    rescore paths that score by differences)."""
    addresses: tuple = field(init=False)
    enumerable_addresses: tuple = field(init=False)

    def __post_init__(self):
        addresses = tuple(sorted(self.dists))
        if len(set(addresses)) != len(addresses):
            raise UsageError("duplicate addresses in model")
        object.__setattr__(self, "addresses", addresses)
        object.__setattr__(
            self, "enumerable_addresses", tuple(a for a in addresses if self.dists[a].enumerable)
        )

    @property
    def K(self):
        return len(self.addresses)

    def enumerable(self, address):
        return self.dists[address].enumerable

    def _data(self, data):
        return self.data if data is None else data


def score_values(model, trace, data, address, values) -> list[Scored]:
    """Log-likelihood (and lazy render) of ``trace`` with ``address`` set to each value."""
    data = model._data(data)
    if model.rescore is not None:
        return model.rescore(trace, data, address, values)
    base = trace.values()
    reuse = model.render_addresses is not None and address not in model.render_addresses
    out = []
    for v in values:
        vals = dict(base)
        vals[address] = v
        render = trace.render if reuse else model.render(vals)
        ll = float(model.loglik(render, data, vals))
        out.append((ll, (lambda r=render: r)))
    return out


def trace_from_values(model, values, data=None):
    """Build a consistent trace holding the given values (all addresses required)."""
    data = model._data(data)
    choices = {}
    for a in model.addresses:
        if a not in values:
            raise UsageError(f"missing value for {a}")
        v = values[a]
        d = model.dists[a]
        choices[a] = ChoiceRecord(v, d, log_density(d, v))
    vals = {a: choices[a].value for a in model.addresses}
    try:
        render = model.render(vals)
        ll = float(model.loglik(render, data, vals))
    except Exception as exc:  # noqa: BLE001
        raise ModelError(f"{model.name}: render/likelihood failed: {exc}") from exc
    lp = math.fsum(r.log_prior for r in choices.values())
    return Trace(choices, render, ll, lp)


def init_trace(model, rng, data=None):
    """Sample every address from its prior and populate the caches."""
    values = {a: sample_prior(model.dists[a], rng) for a in model.addresses}
    return trace_from_values(model, values, data)


@dataclass(frozen=True)
class MHProposal:
    address: Address
    new_value: Any
    loglik_new: float
    log_alpha: float
    """Log acceptance probability from the full ratio."""
    log_alpha_shortcut: float
    """min(0, loglik_new - loglik_old): the prior-cancelled form."""
    make_render: Callable[[], Any]

    @property
    def alpha(self):
        return math.exp(self.log_alpha)

    @property
    def alpha_shortcut(self):
        return math.exp(self.log_alpha_shortcut)


def _log_ratio(num, den):
    if num == NEG_INF:
        return NEG_INF
    if den == NEG_INF:
        return 0.0
    return min(0.0, num - den)


def propose_mh(model, trace, data, rng) -> MHProposal:
    """Pick an address uniformly, resimulate it from its prior, score the ratio."""
    data = model._data(data)
    K = model.K
    address = model.addresses[int(rng.integers(K))]
    old = trace.choices[address]
    new_value = sample_prior(old.dist, rng)
    new_lp = log_density(old.dist, new_value)
    [(ll_new, make_render)] = score_values(model, trace, data, address, [new_value])

    lp_old_total = math.fsum(r.log_prior for r in trace.choices.values())
    lp_new_total = math.fsum(
        new_lp if a == address else r.log_prior for a, r in trace.choices.items()
    )
    log_q_fwd = -math.log(K) + new_lp
    log_q_back = -math.log(K) + old.log_prior
    num = ll_new + lp_new_total + log_q_back
    den = trace.loglik + lp_old_total + log_q_fwd
    if ll_new == NEG_INF or new_lp == NEG_INF:
        num = NEG_INF
    return MHProposal(
        address=address,
        new_value=new_value,
        loglik_new=ll_new,
        log_alpha=_log_ratio(num, den),
        log_alpha_shortcut=_log_ratio(ll_new, trace.loglik),
        make_render=make_render,
    )


def _accept(model, trace, data, address, value, render, loglik):
    if model.recompute_on_accept:
        vals = trace.values()
        vals[address] = value
        loglik = float(model.loglik(render, data, vals))
    return trace.replace(address, value, render, loglik)


def accept_proposal(model, trace, data, proposal):
    data = model._data(data)
    return _accept(model, trace, data, proposal.address, proposal.new_value,
                   proposal.make_render(), proposal.loglik_new)


def mh_step(model, trace, data, rng):
    """One single-site MH transition. Returns (trace, accepted, address)."""
    data = model._data(data)
    prop = propose_mh(model, trace, data, rng)
    u = rng.random()
    if prop.log_alpha > NEG_INF and u < math.exp(prop.log_alpha):
        return accept_proposal(model, trace, data, prop), True, prop.address
    return trace, False, prop.address


def gibbs_step(model, trace, data, address, rng):
    """Resample ``address`` exactly from its full conditional over a finite support."""
    data = model._data(data)
    dist = model.dists.get(address)
    if dist is None or not dist.enumerable:
        raise UsageError(f"{address} is not an enumerable address")
    support = dist.support()
    scored = score_values(model, trace, data, address, support)
    logw = np.array([log_density(dist, v) + ll for v, (ll, _) in zip(support, scored)])
    u = rng.random()
    top = logw.max()
    if top == NEG_INF:
        return trace
    w = np.exp(logw - top)
    cdf = np.cumsum(w)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    idx = min(idx, len(support) - 1)
    value = support[idx]
    if value == trace.choices[address].value:
        return trace
    ll, make_render = scored[idx]
    return _accept(model, trace, data, address, value, make_render(), ll)


@dataclass(frozen=True)
class ChainConfig:
    steps: int
    gibbs_probability: float = 0.1
    seed: int = 0
    thin: int | None = None
    """Keep every ``thin``-th state; None keeps only the final state."""
    record_every: int = 10

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if not 0.0 <= self.gibbs_probability <= 1.0:
            raise ConfigError(f"gibbs_probability must lie in [0, 1], got {self.gibbs_probability}")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if self.thin is not None and self.thin < 1:
            raise ConfigError("thin must be >= 1 or None")


DIAGNOSTIC_COLUMNS = ("step", "log_prior", "log_likelihood", "accepted", "address")


@dataclass
class ChainDiagnostics:
    """One row per recorded step; ``extras`` holds observer columns."""

    step: list = field(default_factory=list)
    log_prior: list = field(default_factory=list)
    log_likelihood: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    address: list = field(default_factory=list)
    kind: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.step)

    def append(self, step, trace, accepted, address, kind, observed=None):
        self.step.append(step)
        self.log_prior.append(trace.log_prior)
        self.log_likelihood.append(trace.loglik)
        self.accepted.append(bool(accepted))
        self.address.append(str(address))
        self.kind.append(kind)
        for name, value in (observed or {}).items():
            self.extras.setdefault(name, []).append(value)

    def rows(self):
        names = list(self.extras)
        for i in range(len(self.step)):
            row = {
                "step": self.step[i],
                "log_prior": self.log_prior[i],
                "log_likelihood": self.log_likelihood[i],
                "accepted": self.accepted[i],
                "address": self.address[i],
            }
            for n in names:
                row[n] = self.extras[n][i]
            yield row

    def to_csv(self, path):
        header = list(DIAGNOSTIC_COLUMNS) + list(self.extras)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in self.rows():
                w.writerow([_fmt(row[h]) for h in header])


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_diagnostics_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_chain(model, data=None, config=None, rng=None, observers=None, init=None):
    """Run one chain. Returns (samples, diagnostics).

    Each step is, with probability ``config.gibbs_probability``, an
    enumerative Gibbs update of a uniformly chosen enumerable address, and
    otherwise a single-site MH step. ``observers`` maps column names to
    functions of the trace, evaluated at recorded steps.
    """
    if config is None:
        raise ConfigError("a ChainConfig is required")
    data = model._data(data)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    trace = init if init is not None else init_trace(model, rng, data)
    enum = model.enumerable_addresses
    diag = ChainDiagnostics()
    samples = []
    for step in range(1, config.steps + 1):
        if enum and rng.random() < config.gibbs_probability:
            address = enum[int(rng.integers(len(enum)))]
            new = gibbs_step(model, trace, data, address, rng)
            accepted = new is not trace
            kind = "gibbs"
        else:
            new, accepted, address = mh_step(model, trace, data, rng)
            kind = "mh"
        trace = new
        if step % config.record_every == 0:
            observed = {k: f(trace) for k, f in observers.items()} if observers else None
            diag.append(step, trace, accepted, address, kind, observed)
        if config.thin is not None and step % config.thin == 0:
            samples.append(trace)
    if config.thin is None:
        samples.append(trace)
    return samples, diag


def _jsonable(v):
    if isinstance(v, (bool, int)):
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    return float(v)


def trace_to_json(trace, extra=None):
    """JSON document mapping address strings to values."""
    doc = {str(a): _jsonable(r.value) for a, r in sorted(trace.choices.items())}
    if extra:
        doc.update(extra)
    return doc


def values_from_json(doc, model=None):
    out = {}
    for key, v in doc.items():
        try:
            a = Address.parse(key)
        except UsageError:
            continue
        if model is not None and a not in model.dists:
            continue
        out[a] = v
    return out


def write_trace_json(trace, path, extra=None):
    with open(path, "w") as fh:
        json.dump(trace_to_json(trace, extra), fh, indent=1, sort_keys=True)
        fh.write("\n")
