"""Splittable seeds: every stochastic component draws from
``SeedSequence(master, spawn_key=(crc32(component), index))``, so adding a
component or resizing a batch never shifts another component's stream."""

from __future__ import annotations

import zlib

import numpy as np


def seed_sequence(master: int, component: str, index: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(zlib.crc32(component.encode()), int(index)))


def derive_rng(master: int, component: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(master, component, index))
