import numpy as np
import pytest

from deconfound import (
    GraphSpec,
    ParameterError,
    SimConfig,
    build_precision,
    compute_svd,
    estimate_num_factors,
    generate_dataset,
    place_signals,
)
from deconfound.simulate import PD_FLOOR, stream_rng


class TestBuildPrecision:
    def test_identity(self):
        omega, sigma = build_precision(GraphSpec(kind="identity"), 5, stream_rng(0, "graph"))
        np.testing.assert_array_equal(omega, np.eye(5))
        np.testing.assert_array_equal(sigma, np.eye(5))

    def test_banded_structure(self):
        omega, _ = build_precision(GraphSpec(kind="banded"), 4, stream_rng(0, "graph"))
        assert omega[0, 1] == 0.4 and omega[0, 2] == 0.2 and omega[0, 3] == 0.0
        np.testing.assert_array_equal(omega, omega.T)
        # off-diagonal row mass stays below twice the diagonal
        off = np.sum(np.abs(omega), axis=1) - np.abs(np.diag(omega))
        assert np.all(off < 2.0 * np.diag(omega))

    def test_banded_pd_certificate(self):
        omega, sigma = build_precision(GraphSpec(kind="banded"), 50, stream_rng(1, "graph"))
        assert np.linalg.eigvalsh(omega)[0] >= PD_FLOOR
        np.testing.assert_allclose(omega @ sigma, np.eye(50), atol=1e-8)

    def test_erdos_renyi_inverse_and_floor(self):
        rng = stream_rng(123, "graph")
        omega, sigma = build_precision(GraphSpec(kind="erdos-renyi"), 50, rng)
        np.testing.assert_allclose(omega @ sigma, np.eye(50), atol=1e-8)
        assert np.linalg.eigvalsh(omega)[0] >= PD_FLOOR
        np.testing.assert_allclose(np.diag(omega), np.ones(50), atol=1e-12)

    def test_erdos_renyi_repair_kicks_in(self):
        # dense heavy edges force the repair loop
        spec = GraphSpec(kind="erdos-renyi", edge_prob=0.5, edge_weight=0.3)
        omega, _ = build_precision(spec, 40, stream_rng(7, "graph"))
        assert np.linalg.eigvalsh(omega)[0] >= PD_FLOOR

    def test_spec_validation(self):
        with pytest.raises(ParameterError):
            GraphSpec(kind="mystery")
        with pytest.raises(ParameterError):
            GraphSpec(kind="erdos-renyi", edge_prob=1.5)


class TestPlaceSignals:
    def test_zero_signals(self):
        beta = place_signals(10, 0, 3.0, np.ones(10), 0.01, stream_rng(0, "signals"))
        assert np.all(beta == 0.0)

    def test_magnitude_formula(self):
        # 8 * omega_jj * log(p)/n = 0.04 -> |beta_j| = 0.2 at nu = 0
        beta = place_signals(50, 50, 0.0, np.ones(50), 0.005, stream_rng(1, "signals"))
        np.testing.assert_allclose(np.abs(beta), 0.2)

    def test_attenuation_ratio(self):
        rng_a = stream_rng(2, "signals")
        rng_b = stream_rng(2, "signals")
        strong = place_signals(30, 30, 0.0, np.ones(30), 0.005, rng_a)
        weak = place_signals(30, 30, 3.0, np.ones(30), 0.005, rng_b)
        np.testing.assert_allclose(np.abs(weak) / np.abs(strong), 1.2**-3)

    def test_support_size_and_signs(self):
        beta = place_signals(100, 17, 1.0, np.ones(100), 0.01, stream_rng(3, "signals"))
        support = np.nonzero(beta)[0]
        assert support.size == 17
        assert set(np.sign(beta[support])) <= {-1.0, 1.0}

    def test_too_many_signals(self):
        with pytest.raises(ParameterError):
            place_signals(5, 6, 1.0, np.ones(5), 0.01, stream_rng(4, "signals"))


class TestGenerateDataset:
    def test_unconfounded_reduction(self):
        cfg = SimConfig(n=50, p=8, q=0, s0=0, seed=5)
        ds, truth = generate_dataset(cfg)
        # with q = 0 and the identity graph, X is exactly the E stream and
        # Y (with no signals) is exactly the noise stream
        expected_x = stream_rng(5, "E").standard_normal((50, 8))
        expected_y = stream_rng(5, "xi").standard_normal(50)
        np.testing.assert_array_equal(ds.design, expected_x)
        np.testing.assert_array_equal(ds.response, expected_y)
        assert truth.confounders.shape == (50, 0)

    def test_determinism(self):
        cfg = SimConfig(n=40, p=12, q=2, s0=3, seed=9)
        a, truth_a = generate_dataset(cfg)
        b, truth_b = generate_dataset(cfg)
        np.testing.assert_array_equal(a.design, b.design)
        np.testing.assert_array_equal(a.response, b.response)
        np.testing.assert_array_equal(truth_a.beta, truth_b.beta)

    def test_signal_stream_isolated(self):
        base = SimConfig(n=40, p=12, q=2, s0=0, seed=13)
        more = SimConfig(n=40, p=12, q=2, s0=6, seed=13)
        a, _ = generate_dataset(base)
        b, truth_b = generate_dataset(more)
        np.testing.assert_array_equal(a.design, b.design)
        assert np.count_nonzero(truth_b.beta) == 6

    def test_model_identity(self):
        cfg = SimConfig(n=30, p=6, q=2, s0=2, seed=17)
        ds, truth = generate_dataset(cfg)
        noise = stream_rng(17, "xi").standard_normal(30)
        reconstructed = (
            ds.design @ truth.beta
            + truth.confounders @ truth.confounder_coef
            + noise
        )
        np.testing.assert_allclose(ds.response, reconstructed, atol=1e-12)

    def test_covariance_oracle(self):
        cfg = SimConfig(n=2000, p=200, q=3, s0=0, seed=23)
        ds, truth = generate_dataset(cfg)
        target = truth.loadings.T @ truth.loadings + truth.sigma
        sample = np.cov(ds.design, rowvar=False)
        rel = np.linalg.norm(sample - target) / np.linalg.norm(target)
        assert rel <= 0.15

    def test_spiked_spectrum(self):
        hits = 0
        for seed in range(100):
            ds, _ = generate_dataset(SimConfig(n=300, p=400, q=3, s0=20, seed=seed))
            svals = np.linalg.svd(ds.design, compute_uv=False)
            if svals[2] >= 3.0 * svals[3]:
                hits += 1
        assert hits >= 95

    def test_factor_count_recovery_spot_check(self):
        ds, _ = generate_dataset(SimConfig(n=300, p=400, q=3, s0=20, seed=2))
        assert estimate_num_factors(compute_svd(ds.design), 20) == 3

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            SimConfig(n=10, p=5, q=5, s0=0)  # q >= min(n, p)
        with pytest.raises(ParameterError):
            SimConfig(n=10, p=5, q=0, s0=6)  # s0 > p
        with pytest.raises(ParameterError):
            SimConfig(n=10, p=5, q=0, s0=0, seed=-1)
        with pytest.raises(ParameterError):
            SimConfig(n=10, p=5, q=0, s0=0, nu=-1.0)

    def test_ground_truth_consistency(self):
        cfg = SimConfig(n=25, p=10, q=1, s0=4, seed=29,
                        graph=GraphSpec(kind="banded"))
        _, truth = generate_dataset(cfg)
        np.testing.assert_allclose(
            truth.omega @ truth.sigma, np.eye(10), atol=1e-8
        )
        assert truth.support.size == 4
        assert truth.loadings.shape == (1, 10)


class TestStreams:
    def test_streams_distinct(self):
        draws = {
            name: stream_rng(77, name).standard_normal(4).tolist()
            for name in ("H", "Psi", "phi", "E", "xi", "signals", "graph")
        }
        flat = [tuple(v) for v in draws.values()]
        assert len(set(flat)) == len(flat)

    def test_unknown_stream(self):
        with pytest.raises(ParameterError):
            stream_rng(0, "nope")
