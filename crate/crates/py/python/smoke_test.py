"""Quick check of the compiled extension: import, one cell solve, one config."""

import math
import tempfile

import tissue_homog as th


def main():
    names = th.presets()
    assert "fat-vertical-2d" in names, names

    m = th.cell_measures("fat-vertical-2d", 32)
    assert abs(sum(m["theta"]) - 1.0) < 1e-12, m

    k = th.permeability("fat-vertical-2d", 32, "artery")
    assert abs(k[0][1] - k[1][0]) <= 1e-8 * abs(k[1][1])
    assert all(math.isfinite(x) for row in k for x in row)

    a = th.effective_diffusion("fat-vertical-2d", 32, "tissue")
    assert a[0][0] > 0 and a[1][1] > 0

    cfg = th.RunConfig("1")
    cfg.cell_grid = 16
    cfg.macro_grid = [8, 8]
    cfg.final_time = 0.02
    again = th.RunConfig.parse(cfg.to_toml())
    assert again.config_hash() == cfg.config_hash()

    try:
        th.RunConfig.parse("case = 7")
    except th.ConfigError:
        pass
    else:
        raise AssertionError("bad case accepted")

    cells = th.compute_cells(cfg)
    flow = th.solve_flow(cfg, cells)
    assert len(flow.p_artery) == math.prod(flow.shape)
    ox = th.run_oxygen(cfg, cells, flow)
    assert ox["min"][-1] >= -1e-12

    with tempfile.TemporaryDirectory() as d:
        first = th.run_pipeline(cfg, d)
        second = th.run_pipeline(cfg, d)
        assert not first["cache_hit"] and second["cache_hit"]

    print("tissue_homog", th.__version__, "ok")


if __name__ == "__main__":
    main()
