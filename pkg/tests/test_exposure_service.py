import numpy as np
import pytest

from interference_lab.errors import InterferenceRequestError, ObjectFormationError
from interference_lab.models.estimates import Contrast, Estimand
from interference_lab.models.exposures import (EXPOSED, ExposedLevel,
                                               ExposureAssignment,
                                               ExposureModel)
from interference_lab.models.graphs import InterferenceGraph

LEAVES_1_AND_3 = [0, 1, 0, 1, 0]


@pytest.mark.parametrize("model, center", [("binary", 1), ("symmetric", 2), ("general", 5)])
def test_center_of_star(client, star5, model, center):
    assignment = client.exposures.expose(model, star5, LEAVES_1_AND_3)
    assert assignment.e.tolist() == [center, 0, 0, 0, 0]
    assert assignment.z.tolist() == LEAVES_1_AND_3


def test_leaves_see_the_center(client, star5):
    assignment = client.exposures.expose("general", star5, [1, 0, 0, 0, 0])
    assert assignment.e.tolist() == [0, 1, 1, 1, 1]


def test_expose_many_matches_expose(client, path6):
    rng = np.random.default_rng(3)
    Z = rng.integers(0, 2, size=(20, 6))
    for model in ("binary", "symmetric", "general"):
        E = client.exposures.expose_many(model, path6, Z)
        for z, e in zip(Z, E):
            assert client.exposures.expose(model, path6, z).e.tolist() == e.tolist()


def test_isolated_units_are_never_exposed(client, empty4):
    assignment = client.exposures.expose("symmetric", empty4, [1, 1, 0, 0])
    assert assignment.e.tolist() == [0, 0, 0, 0]


@pytest.mark.parametrize("model, counts", [
    ("binary", [2, 2, 2, 2, 2]),
    ("symmetric", [5, 2, 2, 2, 2]),
    ("general", [16, 2, 2, 2, 2]),
])
def test_level_counts(client, star5, model, counts):
    assert client.exposures.level_counts(model, star5).tolist() == counts
    assert client.exposures.level_count(model, star5, 0) == counts[0]


def test_general_exposure_refuses_high_degree(client):
    g = InterferenceGraph(n=23, edges=[(0, leaf) for leaf in range(1, 23)])
    with pytest.raises(InterferenceRequestError, match="unit 0 of degree 22"):
        client.exposures.level_counts("general", g)
    with pytest.raises(InterferenceRequestError):
        client.exposures.expose("general", g, np.zeros(23, dtype=int))
    assert client.exposures.level_count("general", g, 1) == 2
    assert client.exposures.level_count("symmetric", g, 0) == 23


def test_bad_treatment_vectors(client, path6):
    with pytest.raises(InterferenceRequestError, match="length 6"):
        client.exposures.expose("binary", path6, [0, 1])
    with pytest.raises(InterferenceRequestError, match="0 or 1"):
        client.exposures.expose("binary", path6, [0, 2, 0, 0, 0, 0])


def test_unknown_model(client, path6):
    with pytest.raises(InterferenceRequestError, match="unknown exposure model"):
        client.exposures.expose("threshold", path6, [0] * 6)


def test_model_aliases():
    assert ExposureModel.parse("binary_any") == ExposureModel.BINARY
    assert ExposureModel.parse("symmetric_count") == ExposureModel.SYMMETRIC
    assert ExposureModel.parse("general_pattern") == ExposureModel.GENERAL
    assert ExposureModel.parse("nothing") is None


class TestExposedLevel:

    @staticmethod
    @pytest.mark.parametrize("level, model, degree, expected", [
        (ExposedLevel.FULL, ExposureModel.BINARY, 4, 1),
        (ExposedLevel.FULL, ExposureModel.SYMMETRIC, 4, 4),
        (ExposedLevel.FULL, ExposureModel.GENERAL, 3, 7),
        (ExposedLevel.ONE, ExposureModel.SYMMETRIC, 4, 1),
        (ExposedLevel.ONE, ExposureModel.GENERAL, 3, 1),
        (ExposedLevel.ONE, ExposureModel.BINARY, 0, 1),
    ])
    def test_resolve(level, model, degree, expected):
        assert level.resolve(model, degree) == expected

    @staticmethod
    def test_isolated_unit_has_no_exposed_level():
        with pytest.raises(InterferenceRequestError, match="isolated"):
            ExposedLevel.FULL.resolve(ExposureModel.SYMMETRIC, 0)


class TestResolveContrast:

    @staticmethod
    def test_total_effect_full_exposure(client, path6):
        resolved = client.exposures.resolve_contrast(Estimand.TTE, "symmetric", path6)
        assert resolved.z1.tolist() == [1] * 6
        assert resolved.e1.tolist() == [1, 2, 2, 2, 2, 1]
        assert resolved.z0.tolist() == [0] * 6
        assert resolved.e0.tolist() == [0] * 6

    @staticmethod
    def test_general_full_exposure(client, path6):
        resolved = client.exposures.resolve_contrast(Estimand.GAMMA2, "general", path6)
        assert resolved.e1.tolist() == [1, 3, 3, 3, 3, 1]
        assert resolved.z0.tolist() == [1] * 6

    @staticmethod
    def test_one_exposed_neighbour(client, path6):
        resolved = client.exposures.resolve_contrast(Estimand.GAMMA1, "symmetric", path6, exposed_level="one")
        assert resolved.e1.tolist() == [1] * 6

    @staticmethod
    def test_strict_resolution_rejects_isolated_units(client, empty4):
        with pytest.raises(InterferenceRequestError):
            client.exposures.resolve_contrast(Estimand.TTE, "symmetric", empty4)

    @staticmethod
    def test_lenient_resolution_marks_missing_cells(client, empty4):
        resolved = client.exposures.resolve_contrast(Estimand.TTE, "symmetric", empty4, strict=False)
        assert resolved.e1.tolist() == [-1] * 4
        assert not resolved.resolved.any()

    @staticmethod
    def test_direct_effect_is_always_resolved(client, empty4):
        resolved = client.exposures.resolve_contrast(Estimand.DTE, "general", empty4)
        assert resolved.resolved.all()

    @staticmethod
    def test_explicit_level_out_of_range(client, path6):
        contrast = Contrast(tau1=(1, 3), tau0=(0, 0))
        with pytest.raises(InterferenceRequestError, match="out of range"):
            client.exposures.resolve_contrast(contrast, "symmetric", path6)


class TestContrast:

    @staticmethod
    def test_cells_must_differ():
        with pytest.raises(ObjectFormationError):
            Contrast(tau1=(0, 0), tau0=(0, 0))

    @staticmethod
    def test_exposed_marker_is_kept():
        contrast = Contrast(tau1=(1, EXPOSED), tau0=(0, 0))
        assert contrast.tau1 == (1, EXPOSED)
        assert contrast.to_dict() == {"tau1": [1, EXPOSED], "tau0": [0, 0], "exposed_level": "full"}

    @staticmethod
    def test_estimand_parse_is_case_insensitive():
        assert Estimand.parse("dte") == Estimand.DTE
        assert Estimand.parse("Gamma1") == Estimand.GAMMA1
        assert Estimand.parse("ATE") is None


def test_cell_membership(client, path6):
    assignment = ExposureAssignment(z=[1, 0, 0, 1, 0, 0], e=[0, 1, 0, 0, 1, 0])
    z = np.array([1, 0, 0, 1, 0, 0])
    e = np.zeros(6, dtype=int)
    assert client.exposures.cell_membership(assignment, z, e).tolist() == [True, False, True, True, False, True]
