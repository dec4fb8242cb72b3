import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from certsynth.bisim import (
    BisimCertificate, CertificateOptions, ModeCertificate, certify_mode, containment_chain_check,
    delta_offsets, max_z, mode_systems, optimize_certificate, prob_bound,
)
from certsynth.errors import CertificateCheckFailed, MissingZ, NotHurwitz, SingularM
from certsynth.mtl import VariableTable, parse_formula
from certsynth.numkernel import is_hurwitz
from certsynth.sysmodel import Mode, ModeSchedule, SwitchedLinearSystem
from generators import random_spd
from oracles import z_bisect



def unit(rng, n):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def toy(Sigma, A=None):
    A = np.array([[-1.0, 0.5], [0.0, -2.0]]) if A is None else A
    sys = SwitchedLinearSystem((Mode(0, A, np.zeros((2, 1)), Sigma),))
    f = parse_formula("G[0,5] (x1 <= 1 & x1 >= -1)", VariableTable(("x1", "x2")))
    return sys, ModeSchedule(((0, 5.0),)), f


def toy_cert(modes, segments, radii):
    return BisimCertificate((0, 1), 2, modes, tuple(segments), tuple(radii), 1.0, 0.05, 5.0,
                            {}, {}, {})


class TestCertifyMode:
    def test_identity(self):
        M, alpha = certify_mode(-np.eye(2), np.zeros((2, 1)), 0.0, np.eye(2))
        assert np.allclose(M, np.eye(2) / 2) and alpha == 0.0

    def test_shifted_unstable(self):
        with pytest.raises(NotHurwitz):
            certify_mode(np.array([[0.1]]), np.ones((1, 1)), 0.3, np.eye(1))

    def test_conditions(self, rng):
        A = rng.standard_normal((4, 4))
        A -= (np.max(np.linalg.eigvals(A).real) + 1.0) * np.eye(4)
        S = rng.standard_normal((4, 2))
        M, alpha = certify_mode(A, S, 0.5)
        assert np.min(np.linalg.eigvalsh(M)) > 0
        assert np.max(np.linalg.eigvalsh(A.T @ M + M @ A + 0.5 * M)) < 0
        assert alpha == pytest.approx(np.trace(S.T @ M @ S))


class TestMaxZ:
    def test_identity(self, rng):
        assert max_z(np.eye(4), unit(rng, 4)) == pytest.approx(1.0)

    def test_diagonal(self):
        assert max_z(np.diag([4.0, 1.0]), [1.0, 0.0]) == pytest.approx(2.0)

    def test_against_bisection(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 9))
            M, a = random_spd(rng, n), unit(rng, n)
            assert max_z(M, a) == pytest.approx(z_bisect(M, a), rel=0, abs=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(1e-3, 1e3), st.integers(0, 2 ** 31))
    def test_scaling(self, s, seed):
        rng = np.random.default_rng(seed)
        M, a = random_spd(rng, 5), unit(rng, 5)
        assert max_z(s * M, a) == pytest.approx(math.sqrt(s) * max_z(M, a), rel=1e-9)

    def test_singular(self):
        with pytest.raises(SingularM):
            max_z(np.diag([1.0, 0.0]), [0.0, 1.0])


class TestOptimizeCertificate:
    def test_single_mode_toy(self):
        sys, sched, f = toy(np.array([[0.0], [1.0]]))
        cert = optimize_certificate(sys, sched, f, CertificateOptions(zeta=100.0, shape_index=1))
        cert.check(systems=mode_systems(sys, cert.coords, cert.modes))
        assert cert.gamma_hat == pytest.approx(cert.modes[0].alpha * 5.0 / 0.05)
        assert cert.radii[0] == pytest.approx(4 * cert.gamma_hat)

    def test_zeta_is_a_scale(self):
        # with r tied to gamma_hat both sqrt(r) and z scale as sqrt(zeta): alpha follows zeta, delta does not
        sys, sched, f = toy(np.array([[1.0], [0.0]]))
        alphas, deltas = [], []
        for zeta in (4.0, 1.0, 0.25):
            cert = optimize_certificate(sys, sched, f, CertificateOptions(zeta=zeta, shape_index=0))
            alphas.append(cert.modes[0].alpha)
            deltas.append(cert.delta_hat[(0, 0, 0)])
        assert alphas[0] > alphas[1] > alphas[2]
        assert np.allclose(alphas, [4 * alphas[1], alphas[1], alphas[1] / 4], rtol=1e-9)
        assert np.allclose(deltas, deltas[0], rtol=1e-9)

    def test_deterministic_sigma_zero(self):
        sys, sched, f = toy(np.zeros((2, 1)))
        cert = optimize_certificate(sys, sched, f, CertificateOptions(r0=1.0))
        assert cert.gamma_hat == 0.0
        z = cert.z[(0, 0, 0)]
        assert cert.delta_hat[(0, 0, 0)] == pytest.approx(1.0 / z)

    def test_metric_search_beats_identity(self):
        sys, sched, f = toy(np.array([[1.0], [0.5]]), A=np.array([[-1.0, 3.0], [-0.5, -2.0]]))
        d = {}
        for method in ("identity", "diagonal", "full"):
            c = optimize_certificate(sys, sched, f, CertificateOptions(method=method))
            d[method] = c.delta_hat[(0, 0, 0)]
        assert d["full"] <= d["diagonal"] * (1 + 1e-9) <= d["identity"] * (1 + 1e-9)

    def test_roundtrip(self):
        sys, sched, f = toy(np.array([[0.3], [1.0]]))
        cert = optimize_certificate(sys, sched, f)
        again = BisimCertificate.loads(cert.dumps())
        assert again.dumps() == cert.dumps()
        again.check(systems=mode_systems(sys, again.coords, again.modes))

    def test_tampered(self):
        sys, sched, f = toy(np.array([[0.3], [1.0]]))
        cert = optimize_certificate(sys, sched, f)
        cert.delta_hat[(0, 0, 0)] *= 0.9
        with pytest.raises(CertificateCheckFailed):
            cert.check()


class TestProbBound:
    def _cert(self, alpha):
        return toy_cert({0: ModeCertificate(np.eye(2), 0.1, alpha)}, [(0, 5.0)], [1.0])

    def test_deterministic(self):
        assert prob_bound(self._cert(0.0), 0, 5.0, 1.0) == 1.0

    def test_zero(self):
        assert prob_bound(self._cert(2.0), 0, 5.0, 10.0) == 0.0

    def test_monotone(self):
        c = self._cert(0.3)
        gs = [prob_bound(c, 0, 2.0, g) for g in (1, 2, 5, 10)]
        ts = [prob_bound(c, 0, T, 10.0) for T in (1, 2, 5, 10)]
        assert gs == sorted(gs) and ts == sorted(ts, reverse=True)


class TestContainment:
    def test_shrinking(self):
        mc = ModeCertificate(np.eye(2), 0.2, 0.0)
        ok, m = containment_chain_check(toy_cert({0: mc, 1: mc}, [(0, 1.0), (1, 1.0)], [1.0, 1.0]))
        assert ok and m[0] > 0

    def test_growing_metric(self):
        m0 = ModeCertificate(np.eye(2), 0.0, 0.0)
        m1 = ModeCertificate(2 * np.eye(2), 0.0, 0.0)
        ok, m = containment_chain_check(toy_cert({0: m0, 1: m1}, [(0, 1.0), (1, 1.0)], [1.0, 1.0]))
        assert not ok and m[0] == pytest.approx(-1.0)


def test_delta_offsets_unit_case():
    cert = toy_cert({0: ModeCertificate(np.eye(2), 0.1, 0.0)}, [(0, 5.0)], [1.0])
    cert.normals[(0, 0)] = (1.0, 0.0)
    cert.z[(0, 0, 0)] = 1.0
    cert.delta_hat[(0, 0, 0)] = (math.sqrt(1.0) + math.sqrt(1.0)) / 1.0
    mod = delta_offsets(cert)
    assert mod.deltas[(0, 0)] == (2.0,)
    with pytest.raises(MissingZ):
        delta_offsets(cert, keys=[(0, 1)])


class TestFourBus:
    def test_hurwitz(self, fourbus, fourbus_cert):
        # the setpoint state has an all-zero row and is left out of the certificate
        assert fourbus.system.inert_states() == (fourbus.system.state_names.index("dPs"),)
        for sysq in mode_systems(fourbus.system, fourbus_cert.coords, (0, 1)).values():
            assert is_hurwitz(sysq["A"])

    def test_invariants(self, fourbus, fourbus_cert):
        sysd = mode_systems(fourbus.system, fourbus_cert.coords, fourbus_cert.modes)
        report = fourbus_cert.check(tol=1e-10, systems=sysd)
        assert all(v["min_eig_M"] > 0 and v["max_eig_lmi"] < 0 for v in report.values())

    def test_gamma_and_radius(self, fourbus, fourbus_cert):
        s = fourbus_cert.coords.index(fourbus.cert_options.shape_index)
        M = fourbus_cert.metric(0)
        assert fourbus_cert.gamma_hat == pytest.approx(100.0 * M[s, s])
        assert fourbus_cert.radii[0] == pytest.approx(4 * fourbus_cert.gamma_hat)
        assert prob_bound(fourbus_cert, 0, fourbus_cert.t_end, fourbus_cert.gamma_hat) == pytest.approx(0.95)

    def test_containment(self, fourbus_cert):
        ok, margins = containment_chain_check(fourbus_cert)
        assert ok and all(m >= 0 for m in margins)

    def test_offsets_against_reference(self, fourbus, fourbus_cert):
        # the reference metric is unavailable, so only the frequency offset is expected close
        phys = {}
        for (k, nu), label in fourbus_cert.labels.items():
            var = "dfr" if "dfr" in label else "df"
            scale = np.linalg.norm(fourbus.table.lookup(var).a)
            phys[var] = fourbus_cert.delta_hat[(k, nu, 0)] * scale
        print(f"df offset {phys['df']:.4f} Hz (reference 0.217), dfr {phys['dfr']:.3f} Hz (reference 6.08)")
        assert phys["df"] == pytest.approx(0.217, rel=0.05)
        assert 0.5 < phys["dfr"] / 6.08 < 2.0
