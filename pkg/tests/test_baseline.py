import math

import numpy as np
import pytest

from conftest import synthetic_dataset
from oracles import top_eigvec

from ddppm.baseline import LdpConfig, ldp_estimate, ldp_perturb, perturb_scaled
from ddppm.data import partition_rows
from ddppm.engine import error_metric


@pytest.fixture
def part():
    return partition_rows(synthetic_dataset(20, 5, seed=0), 4)


class TestLdpConfig:
    def test_reference_variance_value(self):
        # 2 ln(1.25 / 0.05) / 1 = 2 ln 25
        cfg = LdpConfig(epsilon=1.0, delta=0.05)
        assert abs(cfg.sigma2 - 2.0 * math.log(25.0)) <= 1e-12

    def test_delta_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="delta"):
            LdpConfig(epsilon=1.0, delta=1.3)
        with pytest.raises(ValueError, match="delta"):
            LdpConfig(epsilon=1.0, delta=0.0)

    def test_epsilon_positive(self):
        with pytest.raises(ValueError, match="epsilon"):
            LdpConfig(epsilon=0.0, delta=0.1)


class TestPerturb:
    def test_deterministic_in_seed(self, part):
        cfg = LdpConfig(epsilon=2.0, delta=0.1, seed=7)
        a = ldp_perturb(part, cfg)
        b = ldp_perturb(part, cfg)
        assert np.array_equal(a.X, b.X)

    def test_large_epsilon_vanishing_noise(self, part):
        cfg = LdpConfig(epsilon=1e9, delta=0.1, seed=1)
        out = ldp_perturb(part, cfg)
        assert np.max(np.abs(out.X - part.stacked())) <= 1e-7

    def test_empirical_entry_variance(self):
        # 1e5 noise draws within 2% of sigma^2.
        data = partition_rows(synthetic_dataset(250, 40, seed=2), 2)
        cfg = LdpConfig(epsilon=1.0, delta=0.05, seed=3)
        noise = ldp_perturb(data, cfg).X - data.stacked()
        emp = float(np.var(noise))
        assert abs(emp - cfg.sigma2) <= 0.02 * cfg.sigma2

    def test_zero_variance_path_is_identity(self, part):
        out = perturb_scaled(part, 0.0, seed=0)
        assert np.array_equal(out.X, part.stacked())


class TestEstimate:
    def test_zero_noise_matches_plain_svd(self, part):
        X_clean = perturb_scaled(part, 0.0, seed=0)
        est = ldp_estimate(X_clean, r=3)
        U, _, _ = np.linalg.svd(part.stacked(), full_matrices=False)
        for j in range(3):
            ref = U[:, j]
            assert min(np.linalg.norm(est[:, j] - ref),
                       np.linalg.norm(est[:, j] + ref)) <= 1e-10

    def test_columns_orthonormal_at_full_rank(self, part):
        est = ldp_estimate(perturb_scaled(part, 0.3, seed=5), r=5)
        gram = est.T @ est
        np.testing.assert_allclose(gram, np.eye(5), atol=1e-10)

    def test_sign_canonicalized(self, part):
        est = ldp_estimate(perturb_scaled(part, 0.1, seed=6), r=2)
        for j in range(2):
            k = int(np.argmax(np.abs(est[:, j])))
            assert est[k, j] > 0

    def test_rank_out_of_range(self, part):
        X = perturb_scaled(part, 0.0, seed=0)
        with pytest.raises(ValueError, match="r <="):
            ldp_estimate(X, r=6)

    def test_error_increases_with_noise(self):
        # Monte-Carlo ordering: mean sin error at sigma^2 = 0.5 below the
        # mean at sigma^2 = 5.0 over 200 paired trials.
        data = partition_rows(synthetic_dataset(24, 5, seed=8), 4)
        v = top_eigvec(data.stacked())
        means = {}
        for sigma2 in (0.5, 5.0):
            errs = [error_metric(v, ldp_estimate(
                perturb_scaled(data, sigma2, seed=t), 1)[:, 0])
                for t in range(200)]
            means[sigma2] = float(np.mean(errs))
        assert means[0.5] <= means[5.0]
