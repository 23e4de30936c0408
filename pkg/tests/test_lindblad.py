import numpy as np

from cavityglass.lindblad import dense_spin_ops, lindblad_reference, trace_distance
from cavityglass.model import DriveParams
from cavityglass.quantum import SimConfig


def test_trace_and_positivity(glass3):
    drive = DriveParams(ramp_start=5e-6, ramp_end=60e-6)
    times = np.linspace(0, 8e-5, 9)
    rhos = lindblad_reference(glass3, drive, SimConfig(), times)
    for r in rhos:
        assert abs(np.trace(r) - 1) < 1e-6
        np.testing.assert_allclose(r, r.conj().T, atol=1e-10)
        assert np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min() > -1e-8


def test_no_drive_is_stationary(glass3):
    drive = DriveParams(ramp_start=1.0, ramp_end=2.0)
    times = np.array([0.0, 5e-5, 1e-4])
    rhos = lindblad_reference(glass3, drive, SimConfig(), times)
    _, _, Z = dense_spin_ops(3)
    for r in rhos:
        np.testing.assert_allclose([2 * np.trace(r @ op).real for op in Z], -1, atol=1e-9)
        assert trace_distance(r, rhos[0]) < 1e-9


def test_trace_distance_basics():
    a = np.diag([1.0, 0.0])
    b = np.diag([0.0, 1.0])
    assert trace_distance(a, b) == 1.0
    assert trace_distance(a, a) == 0.0
