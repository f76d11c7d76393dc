"""Smoke test for the mvtrack extension module.

Uses an installed `mvtrack` if present, otherwise loads the library built by
`cargo build --release -p mvtrack-py`.
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys
import tempfile


def load_module():
    try:
        import mvtrack

        return mvtrack
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for profile in ("release", "debug"):
        lib = root / "target" / profile / "libmvtrack.so"
        if lib.exists():
            loader = importlib.machinery.ExtensionFileLoader("mvtrack", str(lib))
            spec = importlib.util.spec_from_file_location("mvtrack", lib, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            sys.modules["mvtrack"] = module
            return module
    sys.exit("mvtrack extension not found; run `cargo build --release -p mvtrack-py`")


def main():
    mv = load_module()

    a = mv.CameraModel.look_at(0, 900.0, (8.0, 0.0, 3.0), (0.0, 0.0, 0.9))
    b = mv.CameraModel.look_at(1, 900.0, (0.0, 8.0, 3.0), (0.0, 0.0, 0.9))
    x = (0.5, -0.3, 1.2)
    ua, ub = a.project(x), b.project(x)
    point, residual = mv.triangulate([(a, ua), (b, ub)])
    assert math.dist(point, x) < 1e-6, point
    assert residual < 1e-6
    d = mv.normalized_pair_distance(a, (*ua, 60.0, 150.0), b, (*ub, 60.0, 150.0))
    assert d < 1e-9, d

    inf = float("inf")
    clusters = mv.pdnc(
        [
            [0.0, 0.1, None, inf],
            [0.1, 0.0, 0.2, 0.9],
            [None, 0.2, 0.0, 0.8],
            [inf, 0.9, 0.8, 0.0],
        ],
        0.3,
    )
    assert clusters == [[0, 1, 2], [3]], clusters

    cfg = mv.PipelineConfig("[window]\nsize = 30\nstep = 20\n")
    assert cfg.window == (30, 20) and cfg.mode == "box" and cfg.kappa == 0.2

    cams, dets, gt = mv.simulate(cameras=3, persons=3, frames=120, seed=2)
    tracks = mv.track(cams, dets, cfg)
    scores = mv.evaluate(gt, tracks)
    assert scores["mota"] == 1.0 and scores["ids"] == 0, scores

    with tempfile.TemporaryDirectory() as tmp:
        path = pathlib.Path(tmp) / "tracks.txt"
        mv.write_tracks(str(path), tracks)
        back = mv.load_tracks(str(path))
        assert back.keys() == tracks.keys()

    print(f"ok: {len(tracks)} tracks, mota={scores['mota']:.3f}, idf1={scores['idf1']:.3f}")


if __name__ == "__main__":
    main()
