"""Benchmark plants used by the experiments and demos."""
from __future__ import annotations

import numpy as np

from .lti_sim import LtiSystem


def batch_reactor() -> LtiSystem:
    """Open-loop unstable batch reactor, discretized at 0.1 s (4 states, 2 inputs, 2 outputs)."""
    A = np.array([[1.178, 0.001, 0.511, -0.403],
                  [-0.051, 0.661, -0.011, 0.061],
                  [0.076, 0.335, 0.560, 0.382],
                  [0.0, 0.335, 0.089, 0.849]])
    B = np.array([[0.004, -0.087],
                  [0.467, 0.001],
                  [0.213, -0.235],
                  [0.213, -0.016]])
    C = np.array([[1.0, 0.0, 1.0, -1.0],
                  [0.0, 1.0, 0.0, 0.0]])
    return LtiSystem(A, B, C)


# Observer gain reported for the noise-free batch-reactor design with
# Nx = 0.02 I4, Ny = 0.02 I2 (four decimals).
BATCH_REACTOR_REFERENCE_L = np.array([[0.7034, 0.0385],
                                      [-0.0228, 0.3812],
                                      [0.2753, 0.4023],
                                      [0.0619, 0.4066]])


def rotating_target() -> LtiSystem:
    """Input-driven rotating target (2 states, 1 input, 4 outputs)."""
    A = np.array([[0.9455, -0.2426],
                  [0.2486, 0.9455]])
    B = np.array([[0.1], [0.0]])
    C = np.array([[1.0, 0.4],
                  [0.9, -1.2],
                  [-0.8, 0.2],
                  [0.0, 0.7]])
    return LtiSystem(A, B, C)


def scalar_system(a: float = 0.5, b: float = 1.0, c: float = 1.0) -> LtiSystem:
    return LtiSystem(np.array([[a]]), np.array([[b]]), np.array([[c]]))
