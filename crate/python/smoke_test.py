"""Exercises the Python bindings end to end. Run after installing the
extension (see README)."""

import tempfile
from pathlib import Path

import lesionscope as ls


def main():
    ct, left, right, lesion, share = ls.make_phantom((32, 28, 20), seed=1)
    assert ct.unit == "raw" and ct.dims == (32, 28, 20)
    hu = ct.to_hounsfield()
    assert min(hu.voxels()) == -800.0

    report = ls.lesion_share(lesion, left, right)
    assert report["total_share"] == share, (report, share)
    assert ls.dice(lesion, lesion) == 1.0

    a = ls.Mask((7, 1, 1), [True, True, True, True, False, False, False])
    b = ls.Mask((7, 1, 1), [False, True, True, True, True, True, True])
    assert ls.dice(a, b) == 0.6
    assert abs(ls.iou(a, b) - 3 / 7) < 1e-15

    assert ls.ct_class(0.25) == "CT1" and ls.ct_class(0.75) == "CT4"
    assert ls.dynamics(0.30, 0.31) == "progression"
    assert ls.dynamics(0.30, 0.305) == "stable"
    assert ls.quantize_share(0.3) == 0.3

    p = ls.paired_permutation_test([1.0] * 8, [0.0] * 8, 256, 0)
    assert p == 0.0078125, p

    models = [ls.simulate_model(lesion, 3.0, 0.0, seed) for seed in range(3)]
    mean = ls.mean_ensemble(models)
    fused = ls.score_fusion(models, mean, mean)
    assert fused.dims == lesion.dims

    with tempfile.TemporaryDirectory() as d:
        header = Path(d) / "lesion.hdr"
        lesion.save(str(header))
        back = ls.read_volume(str(header))
        assert back.bits() == lesion.bits()

    try:
        ls.Probability((2, 1, 1), [0.5, 1.5])
    except ValueError as e:
        assert "ProbabilityOutOfRange" in str(e)
    else:
        raise AssertionError("out-of-range probability accepted")

    print("python smoke test ok")


if __name__ == "__main__":
    main()
