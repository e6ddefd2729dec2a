import json

import numpy as np
import pytest

from lmi_cert import certify, certify_at, sweep_hbar, verify
from lmi_cert import cli
from lmi_cert.problem import build_lmi


class TestCertifyAt:
    def test_published_operating_point_is_sound(self, exchange_doc):
        cert = certify_at(exchange_doc, 4, "corollary2", beta=298.0)
        assert cert.feasible
        assert cert.residual_eig_max < 0.0
        assert cert.z_min_eig > 0.0
        assert cert.performance_bound == pytest.approx(298.0 * 2.577e-5, rel=1e-3)

    def test_infeasible_level_rejected(self, exchange_doc):
        cert = certify_at(exchange_doc, 4, "corollary2", beta=50.0)
        assert not cert.feasible

    def test_hbar_five_infeasible(self, exchange_doc):
        # the published hbar = 4 is maximal: one more step of delay has no
        # verifiable certificate even at a very loose level
        cert = certify_at(exchange_doc, 5, "corollary2", beta=2000.0)
        assert not cert.feasible

    def test_large_delay_infeasible(self, exchange_doc):
        cert = certify_at(exchange_doc, 50, "corollary2", beta=1e4)
        assert not cert.feasible


class TestCertifyMinimized:
    def test_minimized_level_hbar4(self, exchange_doc):
        cert = certify(exchange_doc, 4, "corollary2")
        assert cert.feasible
        assert cert.beta <= 298.0 * 1.01   # at least as strong as published
        assert cert.residual_eig_max < 0.0
        assert cert.variables  # carries the certifying point

    def test_hbar_zero_feasible_and_tighter(self, exchange_doc):
        cert0 = certify(exchange_doc, 0, "corollary2")
        assert cert0.feasible
        # recorded, not asserted in stone: delay-free certificate is tighter
        print(f"\nhbar=0 beta={cert0.beta:.3f} vs hbar=4 published 298")
        assert cert0.beta < 298.0

    def test_verify_rejects_garbage(self, exchange_doc):
        prob = build_lmi(exchange_doc, 4, "corollary2")
        rng = np.random.default_rng(0)
        fake = {
            "z1": np.eye(8), "z2": np.eye(4), "z3": np.eye(4),
            "w1": rng.standard_normal((4, 8)), "w2": np.eye(4),
            "w3": rng.standard_normal((4, 4)), "w4": np.eye(4),
            "w5": np.eye(8),
        }
        lam, z_min = verify(prob, 1.0, fake)
        assert lam > 0.0  # a random point is not a certificate


class TestSweep:
    def test_small_sweep(self, exchange_doc):
        certs = sweep_hbar(exchange_doc, "corollary2", hbar_max=5)
        by_h = {c.hbar: c for c in certs}
        assert by_h[4].feasible
        assert not by_h[5].feasible
        feasible = [h for h, c in by_h.items() if c.feasible]
        print(f"\nlargest feasible hbar: {max(feasible)}")
        assert max(feasible) == 4


class TestCli:
    def test_certify_fixed_beta(self, exchange_doc, tmp_path):
        doc_path = tmp_path / "doc.json"
        doc_path.write_text(json.dumps(exchange_doc))
        out = tmp_path / "cert.json"
        rc = cli.main(["certify", str(doc_path), "--beta", "298", "--out", str(out)])
        assert rc == 0
        cert = json.loads(out.read_text())
        assert cert["feasible"] is True
        assert set(cert) >= {"feasible", "beta", "hbar", "performance_bound",
                             "solver", "residual_eig_max"}

    def test_certify_infeasible_exit(self, exchange_doc, tmp_path):
        doc_path = tmp_path / "doc.json"
        doc_path.write_text(json.dumps(exchange_doc))
        rc = cli.main(["certify", str(doc_path), "--hbar", "5", "--beta", "400"])
        assert rc == 1

    def test_schema_error_exit(self, tmp_path):
        doc_path = tmp_path / "doc.json"
        doc_path.write_text("{}")
        assert cli.main(["certify", str(doc_path)]) == 2
