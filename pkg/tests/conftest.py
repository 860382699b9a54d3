import numpy as np
import pytest

from lipidflow.imops import bilinear_resize
from lipidflow.report import PipelineConfig, run_pipeline
from lipidflow.synth import SynthConfig, generate
from lipidflow.track import DEFAULT_VARIANT


def band_limited_texture(h: int, w: int, seed: int = 3) -> np.ndarray:
    """Textured test frame whose content is smooth at the pixel scale, so
    bilinear warps of it are faithful and flow errors are purely algorithmic."""
    r = np.random.default_rng(seed)
    coarse = r.uniform(0.0, 1.0, (h // 8 + 2, w // 8 + 2))
    tex = bilinear_resize(coarse, (h, w)) * 60.0
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    for fx, fy, ph in ((1 / 14, 1 / 20, 0.3), (1 / 9, -1 / 13, 1.2),
                       (-1 / 17, 1 / 11, 2.2), (1 / 23, 1 / 8, 0.5)):
        tex += 14.0 * np.sin(2.0 * np.pi * (fx * xs + fy * ys) + ph)
    return np.clip(120.0 + (tex - tex.mean()), 0.0, 255.0)


@pytest.fixture(scope="session")
def default_synth():
    """The acceptance scene: 256x256, 30 fps, 5.5 s, lambda_y 0.8, rho_y 25,
    2 px jitter, noise sigma 3, one leading blink."""
    return generate(SynthConfig())


@pytest.fixture(scope="session")
def grid_report(default_synth):
    """All ten variants on the acceptance scene (the expensive run, shared)."""
    video, _ = default_synth
    return run_pipeline(video, PipelineConfig())


@pytest.fixture(scope="session")
def fast_runs(default_synth):
    """Two independent default-variant runs plus the first run's wall time."""
    import time

    video, _ = default_synth
    t0 = time.perf_counter()
    rep1 = run_pipeline(video, PipelineConfig(), variants=[DEFAULT_VARIANT])
    elapsed = time.perf_counter() - t0
    rep2 = run_pipeline(video, PipelineConfig(), variants=[DEFAULT_VARIANT])
    return rep1.to_json(), rep2.to_json(), elapsed
