import numpy as np
import pytest
from scipy.linalg import expm

from certsynth.errors import DomainError, IslandedNetwork, NoConvergence, SingularDs
from certsynth.powergrid import (
    GridParams, NetworkData, WtgParams, build_ninebus, dc_flows, dc_model, ninebus_network,
)
from certsynth.powergrid.kron import kron_reduce
from certsynth.powergrid.params import Line
from certsynth.powergrid.sfr import DW, assemble_switched
from certsynth.powergrid.wtg import DaeBlocks, WR, find_equilibrium, linearize, wtg_residual
from oracles import dae_step_response, dc_flows_direct, nonlinear_dae_response

BASE_FLOWS = {"2_8": 0.0553, "2_9": 0.2447, "7_8": 0.0741, "7_9": 0.1215, "4_8": -0.0294,
              "4_9": 0.0338, "4_5": -0.0043, "5_6": -0.0543, "6_7": -0.1043}


@pytest.fixture(scope="module")
def wtg():
    prm = WtgParams()
    eq = find_equilibrium(prm)
    blk = linearize(prm, eq)
    return prm, eq, blk, kron_reduce(blk)


def reduced_step(kr, u, times):
    n = kr.A.shape[0]
    big = np.zeros((n + 1, n + 1))
    big[:n, :n] = kr.A
    big[:n, n] = kr.B[:, 0] * u
    out = []
    for t in times:
        x = expm(big * t)[:n, n]
        out.append(kr.C[0] @ x + kr.D[0, 0] * u)
    return np.array(out)


class TestEquilibrium:
    def test_residual(self, wtg):
        prm, eq, _, _ = wtg
        assert eq.residual <= 1e-9
        assert np.max(np.abs(wtg_residual(eq.x, eq.y, 0.0, prm, eq.pitch))) <= 1e-8
        assert eq.y[0] == pytest.approx(prm.P_gen)

    def test_restart_is_fixed_point(self, wtg):
        prm, eq, _, _ = wtg
        again = find_equilibrium(prm, np.concatenate([eq.x, eq.y, [eq.pitch]]))
        assert again.iterations == 0

    def test_zero_voltage(self, wtg):
        prm, eq, _, _ = wtg
        with pytest.raises(DomainError):
            wtg_residual(eq.x, np.zeros(10), 0.0, prm, eq.pitch)

    def test_beyond_capability(self):
        with pytest.raises(NoConvergence):
            find_equilibrium(WtgParams(P_gen=40.0, pitch=0.0))


class TestLinearize:
    def test_jacobian_columns(self, wtg):
        prm, eq, blk, _ = wtg
        h = 1e-5
        for i in range(7):
            e = np.zeros(7)
            e[i] = h * (1 + abs(eq.x[i]))
            r1 = wtg_residual(eq.x + e, eq.y, 0.0, prm, eq.pitch)
            r0 = wtg_residual(eq.x - e, eq.y, 0.0, prm, eq.pitch)
            col = (r1 - r0) / (2 * e[i])
            assert np.allclose(col[:7], blk.As[:, i], rtol=1e-5, atol=1e-6 * np.abs(blk.As).max())
            assert np.allclose(col[7:], blk.Cs[:, i], rtol=1e-5, atol=1e-6 * np.abs(blk.Cs).max())

    def test_half_step(self, wtg):
        prm, eq, blk, _ = wtg
        half = linearize(prm, eq, rel=5e-7)
        for name in ("As", "Bs", "Cs", "Ds", "Ms", "Ns"):
            a, b = getattr(blk, name), getattr(half, name)
            assert np.max(np.abs(a - b)) <= 1e-5 * max(1.0, np.abs(a).max())

    def test_noise_on_rotor_speed_only(self, wtg):
        _, _, blk, kr = wtg
        assert np.flatnonzero(blk.S1[:, 0]).tolist() == [WR]
        assert not blk.S2.any()
        assert np.flatnonzero(kr.Sigma[:, 0]).tolist() == [WR]

    def test_deterministic_pipeline(self, wtg):
        prm, eq, blk, kr = wtg
        blk2 = linearize(prm, find_equilibrium(prm))
        assert np.array_equal(blk2.As, blk.As) and np.array_equal(kron_reduce(blk2).A, kr.A)


class TestKron:
    def test_no_coupling(self, rng):
        blk = DaeBlocks(rng.standard_normal((3, 3)), np.zeros((3, 2)), rng.standard_normal((2, 3)),
                        np.eye(2) + 0.1 * rng.standard_normal((2, 2)), rng.standard_normal((3, 1)),
                        rng.standard_normal((2, 1)), np.zeros((1, 3)), np.ones((1, 2)),
                        np.zeros((3, 1)), np.zeros((2, 1)))
        assert np.array_equal(kron_reduce(blk).A, blk.As)

    def test_singular(self):
        z = np.zeros((2, 2))
        blk = DaeBlocks(-np.eye(2), z, z, np.diag([1.0, 0.0]), np.zeros((2, 1)), np.zeros((2, 1)),
                        np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((2, 1)), np.zeros((2, 1)))
        with pytest.raises(SingularDs):
            kron_reduce(blk)

    def test_random_blocks_against_dae(self, rng):
        n, m = 4, 3
        As = rng.standard_normal((n, n))
        As -= (np.max(np.linalg.eigvals(As).real) + 1.0) * np.eye(n)
        blk = DaeBlocks(As, 0.3 * rng.standard_normal((n, m)), rng.standard_normal((m, n)),
                        np.eye(m) * 2 + 0.3 * rng.standard_normal((m, m)), rng.standard_normal((n, 1)),
                        rng.standard_normal((m, 1)), rng.standard_normal((1, n)),
                        rng.standard_normal((1, m)), np.zeros((n, 1)), np.zeros((m, 1)))
        times = np.linspace(0.0, 1.0, 11)
        full = dae_step_response(blk, 0.5, 1.0, times)
        red = reduced_step(kron_reduce(blk), 0.5, times)
        assert np.max(np.abs(full - red)) <= 1e-6

    def test_wtg_step_matches_dae(self, wtg):
        _, _, blk, kr = wtg
        times = np.linspace(0.0, 1.0, 21)
        full = dae_step_response(blk, 0.01, 1.0, times)
        red = reduced_step(kr, 0.01, times)
        assert np.max(np.abs(full - red)) <= 1e-5

    def test_small_step_tracks_nonlinear_model(self, wtg):
        prm, eq, _, kr = wtg
        times = np.linspace(0.0, 0.5, 6)
        u = 1e-3
        nonlin = nonlinear_dae_response(prm, eq, u, 0.5, times)
        red = reduced_step(kr, u, times)
        assert np.max(np.abs(nonlin - red)) <= 1e-2 * np.max(np.abs(red))

    def test_hurwitz(self, wtg):
        assert np.max(np.linalg.eigvals(wtg[3].A).real) < 0


class TestAssembly:
    def test_coupling_gain(self, wtg):
        kr = wtg[3]
        grid = GridParams()
        sys, sched = assemble_switched(kr, grid)
        A = sys.modes[0].A
        assert np.allclose(A[DW, :7], grid.ws / (2 * grid.H) * 0.2 * kr.C[0])
        assert sched.segments == ((0, 5.0), (1, 3.75), (0, 1.25))
        assert sys.modes[1].d[8] == pytest.approx(0.04) and sys.modes[0].d[8] == 0.0

    def test_no_turbines_decouples(self, wtg):
        sys, _ = assemble_switched(wtg[3], GridParams(n_wtg=0))
        for md in sys.modes:
            assert not md.A[7:, :7].any() and md.B[DW, 0] == 0.0 and not md.Sigma[7:].any()

    def test_storage_inputs(self, wtg):
        sys, _ = assemble_switched(wtg[3], GridParams(n_storage=2))
        assert sys.input_names == ("uw", "us1", "us2")


class TestNetwork:
    def test_base_flows(self):
        net = ninebus_network()
        got = dc_flows(net)
        for name, want in BASE_FLOWS.items():
            assert got[name] == pytest.approx(want, abs=5e-5)

    def test_against_direct_solve(self):
        net = ninebus_network()
        branches = [(br.a, br.b, br.x) for br in net.branches]
        inj = np.zeros(9)
        inj[1] = 0.2               # bus 2
        inj[0] = -0.2              # slack balances
        want = dc_flows_direct(branches, {2: 0.2, 1: -0.2}, 1)
        got = dc_flows(net, inj)
        for name in want:
            assert got[name] == pytest.approx(want[name], abs=1e-12)
        # buses 8 and 9 see identical paths back to the slack, so bus 2 splits evenly
        assert got["2_8"] == pytest.approx(got["2_9"])

    def test_kcl_at_load(self):
        net = ninebus_network()
        f = dc_flows(net)
        into_9 = f["2_9"] + f["7_9"] + f["4_9"]
        assert into_9 == pytest.approx(net.loads[9], abs=1e-12)

    def test_parallel_sensitivities(self):
        case = build_ninebus()
        a, b = case.lines["2_8"], case.lines["2_9"]
        assert np.allclose(a.a, b.a, atol=1e-12) and np.allclose(a.c, b.c, atol=1e-12)

    def test_islanded(self):
        net = NetworkData(buses=(1, 2, 3), lines=(Line(1, 2, 0.1),))
        with pytest.raises(IslandedNetwork):
            dc_model(net)
