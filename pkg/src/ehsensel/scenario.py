"""Random scenario generation and JSON round-tripping.

Observation vectors are i.i.d. Gaussian with component variance 1/sqrt(m) so
their squared norms concentrate around sqrt(m); energy arrives as scaled
Poisson counts per slot.  Geometry and energy use independent substreams of
the seed, so regenerating with a different horizon keeps the geometry fixed.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import SchemaError
from .model import Scenario

__all__ = ["generate", "save", "load"]

REQUIRED_FIELDS = ("M", "T", "K", "m", "Ts", "sigmaW2", "sigmaX", "A", "H", "E")
OPTIONAL_FIELDS = ("mu", "Eamp", "seed")


def generate(M: int, T: int, K: int, m: int, mu: float = 1.0, Eamp: float = 1.0,
             Ts: float = 1.0, sigma_w2: float = 1.0, seed: int = 0,
             sigma_x: np.ndarray | None = None) -> Scenario:
    """Draw a random scenario.

    ``mu`` is the mean energy arrival count per unit time and ``Eamp`` the
    energy quantum, so slot arrivals are ``Eamp * Poisson(mu * Ts)``.
    Channel gains are unity.  ``sigma_x`` defaults to the identity.
    """
    geom_ss, energy_ss = np.random.SeedSequence(seed).spawn(2)
    geom = np.random.default_rng(geom_ss)
    energy = np.random.default_rng(energy_ss)
    A = geom.normal(0.0, m ** -0.25, size=(M, m))
    E = Eamp * energy.poisson(mu * Ts, size=(M, T)).astype(float)
    H = np.ones((M, T))
    if sigma_x is None:
        sigma_x = np.eye(m)
    meta = {"mu": float(mu), "Eamp": float(Eamp), "seed": int(seed)}
    return Scenario(M, T, K, float(Ts), m, A, sigma_x, float(sigma_w2), H, E, meta=meta)


def save(sc: Scenario, path: str) -> None:
    """Write a scenario as JSON.  Floats keep full shortest-repr precision,
    so load(save(sc)) reproduces every array bitwise."""
    doc = {
        "M": sc.M,
        "T": sc.T,
        "K": sc.K,
        "m": sc.m,
        "Ts": sc.Ts,
        "sigmaW2": sc.sigma_w2,
        "sigmaX": sc.sigma_x.tolist(),
        "A": sc.A.tolist(),
        "H": sc.H.tolist(),
        "E": sc.E.tolist(),
    }
    if sc.meta:
        for key in OPTIONAL_FIELDS:
            if key in sc.meta:
                doc[key] = sc.meta[key]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load(path: str) -> Scenario:
    """Read a scenario written by :func:`save`.

    Raises :class:`SchemaError` naming the first missing required field, or
    for a document that is not a JSON object.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"expected a JSON object, got {type(doc).__name__}")
    for field in REQUIRED_FIELDS:
        if field not in doc:
            raise SchemaError(f"missing required field {field!r}")
    meta = {key: doc[key] for key in OPTIONAL_FIELDS if key in doc}
    return Scenario(
        int(doc["M"]), int(doc["T"]), int(doc["K"]), float(doc["Ts"]), int(doc["m"]),
        np.asarray(doc["A"], dtype=float),
        np.asarray(doc["sigmaX"], dtype=float),
        float(doc["sigmaW2"]),
        np.asarray(doc["H"], dtype=float),
        np.asarray(doc["E"], dtype=float),
        meta=meta or None,
    )
