"""Exercises the advtex extension module end to end on tiny inputs."""

import math
import os
import tempfile

import advtex


def check_texture():
    data = [[[(c + r * 4 + q) / 40 for q in range(4)] for r in range(4)] for c in range(3)]
    tex = advtex.Texture(data)
    assert tex.shape == (3, 4, 4)
    tiled = tex.tile(2, 3)
    assert tiled.shape == (3, 8, 12)
    crop = tex.crop_torus(3, 3, 4, 4)
    assert crop.tolist()[0][1][1] == data[0][0][0]
    assert tex.crop_torus(4, -4, 4, 4) == tex
    assert advtex.toroidal_crop(data, 1, 1, 2, 2) == [[row[1:3] for row in plane[1:3]] for plane in data]
    assert advtex.Texture.constant(5, 5, [0.2, 0.4, 0.6]).tv_loss() < 1e-9
    assert tex.tv_loss() > 0


def check_generator(tmp):
    gen = advtex.Generator("desk", seed=3)
    assert gen.output_size(9, 9) == (72, 72)
    unit = advtex.LatentUnit.random(gen.latent_channels, 3, seed=1)
    a = gen.synthesize((9, 9), unit=unit)
    b = gen.synthesize((18, 18), unit=unit)
    assert a.shape == (3, 72, 72) and b.shape == (3, 144, 144)
    lo = min(v for p in a.tolist() for r in p for v in r)
    hi = max(v for p in a.tolist() for r in p for v in r)
    assert 0.0 <= lo <= hi <= 1.0

    path = os.path.join(tmp, "texture.png")
    preview = a.save(path, preview=True)
    assert preview is not None and os.path.exists(preview)
    back = advtex.Texture.load(path)
    err = max(abs(x - y) for p, q in zip(a.tolist(), back.tolist()) for r, s in zip(p, q) for x, y in zip(r, s))
    assert err <= 1 / 255 + 1e-9

    unit_path = os.path.join(tmp, "unit.json")
    unit.save(unit_path, gen)
    assert advtex.LatentUnit.load(unit_path, gen).tolist() == unit.tolist()


def check_detector_and_metrics():
    det = advtex.ToyPersonDetector()
    h, w = det.input_size
    blank = [[[0.5] * w for _ in range(h)] for _ in range(3)]
    assert det.detect(blank) == []

    gt = [[(0.5, 0.5, 0.2, 0.4)]]
    exact = [[(0.5, 0.5, 0.2, 0.4, 0.9)]]
    assert math.isclose(advtex.compute_ap(exact, gt), 1.0)
    assert advtex.masr(exact, gt) == 0.0
    assert advtex.masr([[]], gt) == 1.0
    curve = advtex.recall_curve(exact, gt, [0.5, 0.95])
    assert curve == [(0.5, 1.0), (0.95, 0.0)]
    try:
        advtex.compute_ap([[]], [[]])
    except ValueError:
        pass
    else:
        raise AssertionError("AP without ground truth must raise")


def check_misc():
    assert "detector" in advtex.config_toml("desk")
    assert math.isclose(advtex.info_objective([0.0, 0.0], [0.0]), 2 * math.log(2))
    try:
        advtex.Generator("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown preset must raise")


def main():
    check_texture()
    with tempfile.TemporaryDirectory() as tmp:
        check_generator(tmp)
    check_detector_and_metrics()
    check_misc()
    print(f"advtex {advtex.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
