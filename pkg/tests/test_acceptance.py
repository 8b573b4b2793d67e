"""Acceptance criteria at full size and tolerance.

Each test runs one criterion from :mod:`qbandit.acceptance` and prints its
pass/fail line, so ``pytest -s`` shows the same report as
``python3 -m qbandit.acceptance``.
"""

import pytest

from qbandit import acceptance


def check(fn):
    res = fn()
    print(res.line())
    assert res.passed, res.detail


class TestAcceptance:
    def test_01_det_doubling(self):
        check(acceptance.criterion_det_doubling)

    def test_02_inverse_epsilon_sum_bound(self):
        check(acceptance.criterion_inverse_eps_sum)

    def test_03_info_gain_identity(self):
        check(acceptance.criterion_info_gain)

    def test_04_kernel_and_feature_forms_agree(self):
        check(acceptance.criterion_form_equivalence)

    def test_05_qmc_accuracy_contract(self):
        check(acceptance.criterion_qmc_contract)

    def test_06_qae_query_scaling(self):
        check(acceptance.criterion_query_scaling)

    def test_07_regret_plateau_against_gp_ucb(self):
        check(acceptance.criterion_regret_shape)

    def test_08_polylog_stage_growth(self):
        check(acceptance.criterion_stage_growth)

    def test_09_linear_confidence_width(self):
        check(acceptance.criterion_width)

    def test_10_unit_weights_reduce_to_gp_ucb(self):
        check(acceptance.criterion_degenerate_reduction)


def test_unknown_criterion_is_rejected():
    with pytest.raises(SystemExit):
        acceptance.main(["42"])
