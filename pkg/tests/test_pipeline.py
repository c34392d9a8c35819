import json
import re

import numpy as np
import pytest

from quadsmooth.cli import main
from quadsmooth.errors import BadMeasureExceeded
from quadsmooth.maps import MapSpec, SampledGrid, read_sampled_grid
from quadsmooth.mesh import build_grid
from quadsmooth.piecewise import interpolate_grid
from quadsmooth.pipeline import RunConfig, run_approximate, run_smooth
from quadsmooth.svg import BadSquares, GridLayer, ImageMesh, render_svg


@pytest.mark.parametrize(
    "text,kind,params",
    [
        ("identity", "identity", ()),
        ("shear(0.3)", "shear", (0.3,)),
        ("radial:0.25", "radial", (0.25,)),
        ("linear(1, 0.5, 0, 2)", "linear", (1.0, 0.5, 0.0, 2.0)),
        ("degenerate", "degenerate", ()),
    ],
)
def test_map_specs_parse(text, kind, params):
    s = MapSpec.parse(text)
    assert s.kind == kind and s.params == params
    assert s.resolved_domain() == (0.0, 0.0, 1.0, 1.0)
    v = s.source().value(np.array([[0.2, 0.3]]))
    assert v.shape == (1, 2) and np.all(np.isfinite(v))


def test_bad_map_specs():
    for text in ("spiral(1)", "shear(a)", ""):
        with pytest.raises(ValueError):
            MapSpec.parse(text).source()
    with pytest.raises(ValueError):
        MapSpec.parse("identity(1)").source()


def test_sampled_grid_round_trip(tmp_path):
    src = MapSpec.parse("shear(0.2)").source()
    g = SampledGrid.from_source(src, 21, 17, 0.0, 0.0, 0.05, 1 / 16)
    path = tmp_path / "map.txt"
    g.write(path)
    back = read_sampled_grid(path)
    assert (back.nx, back.ny, back.dx, back.dy) == (21, 17, 0.05, 1 / 16)
    assert np.array_equal(back.values, g.values)
    # x runs fastest in the file
    second = path.read_text().splitlines()[2].split()
    assert np.array_equal(np.array(second, float), g.values[1, 0])
    spec = MapSpec.parse(f"grid:{path}")
    assert spec.resolved_domain() == pytest.approx((0.0, 0.0, 1.0, 1.0))
    s = spec.source()
    p = np.array([[0.31, 0.47], [0.9, 0.1]])
    assert np.abs(s.value(p) - src.value(p)).max() < 1e-4
    assert np.abs(s.jet(p).D - src.jet(p).D).max() < 1e-2


def test_sampled_grid_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.txt"
    for body in ("2 2 0 0 1\n", "2 2 0 0 1 1\n0 0\n1 0\n0 1\n", "2 2 0 0 1 1\n0 0\n1 0\n0 1\nnan 1\n"):
        bad.write_text(body)
        with pytest.raises(ValueError):
            read_sampled_grid(bad)


def test_config_text_and_updates():
    cfg = RunConfig.from_text("map = radial(0.3)  # comment\nr0 = 1/32\nall_good = yes\ndomain = 0 0 2 1\n")
    assert cfg.map == "radial(0.3)" and cfg.r0 == 1 / 32 and cfg.all_good is True
    assert cfg.domain == (0.0, 0.0, 2.0, 1.0)
    assert cfg.updated(r0=None).r0 == cfg.r0
    assert cfg.updated(**{"grid-res": "64"}).grid_res == 64
    assert cfg.run_id() == RunConfig.from_text("r0=0.03125\nmap=radial(0.3)\nall_good=1\ndomain=0,0,2,1").run_id()
    assert cfg.run_id() != cfg.updated(seed=1).run_id()
    for text in ("colour = red", "r0", "all_good = maybe"):
        with pytest.raises(ValueError):
            RunConfig.from_text(text)


def test_identity_pipeline_is_exact():
    cfg = RunConfig(map="identity", r0=1 / 8)
    ap = run_approximate(cfg)
    d = ap.report.data
    assert d["classification"]["bad_measure"] == 0.0
    assert d["interpolant"]["linf_error"] < 1e-10
    assert d["interpolant"]["singular_measure"] < 1e-10
    assert ap.report.ok


def test_bad_measure_exceeded_keeps_report():
    cfg = RunConfig(map="shear(0.2)", r0=1 / 8)
    with pytest.raises(BadMeasureExceeded) as info:
        run_approximate(cfg)
    rep = info.value.result.report
    assert not rep.ok and rep.data["classification"]["bad_measure"] >= 0.1
    assert [c["name"] for c in rep.failures()] == ["bad_measure_below_nu"]


def test_reports_deterministic_and_csv():
    cfg = RunConfig(map="radial(0.3)", r0=0.25, all_good=True, enforce_nu=False)
    a, b = run_approximate(cfg), run_approximate(cfg)
    assert a.report.to_json() == b.report.to_json()
    sa, sb = run_smooth(a.pq, cfg, src=a.src), run_smooth(b.pq, cfg, src=b.src)
    assert sa.report.to_json() == sb.report.to_json()
    data = json.loads(sa.report.to_json())
    assert data["ok"] and data["stage"] == "smooth" and data["schema_version"] == 1
    assert all(re.match(r"^(edge\[\d+\]|vertex\[\d+\])\.\w+$|^[a-z_]+$", c["name"]) for c in data["checks"])
    csv_text = sa.report.to_csv()
    assert csv_text.startswith("key,value\n") and "smoothed.seam_mismatch," in csv_text


def test_smooth_leaves_bulk_untouched():
    cfg = RunConfig(map="shear(0.2)", r0=0.25, all_good=True, enforce_nu=False)
    ap = run_approximate(cfg)
    sm = run_smooth(ap.pq, cfg, src=ap.src)
    m = sm.report.data["smoothed"]
    assert m["untouched_max_diff"] == 0.0 and m["seam_mismatch"] < 1e-9
    assert m["linf_A_minus_g"]["total"] <= m["linf_bound"]["bound"] * (1 + 1e-9)
    assert sm.report.ok, sm.report.failures()


def test_cli_exit_codes(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["approximate", "--map", "identity", "--r0", "0.125", "--out-dir", str(out)]) == 0
    assert json.loads((out / "report-approximate.json").read_text())["ok"]
    # bad measure above nu: stops with the report written
    assert main(["approximate", "--map", "shear(0.2)", "--r0", "0.125", "--out-dir", str(out)]) == 1
    assert not json.loads((out / "report-approximate.json").read_text())["ok"]
    # same run told to keep going finishes with a failed check
    assert main(["approximate", "--map", "shear(0.2)", "--r0", "0.125", "--no-enforce-nu", "--out-dir", str(out)]) == 2
    assert main(["approximate", "--map", "nonsense", "--out-dir", str(out)]) == 1
    assert main(["approximate", "--map", "identity", "--r0", "0.125", "--report", "csv", "--out-dir", str(out)]) == 0
    assert (out / "report-approximate.csv").read_text().startswith("key,value")
    cfg = tmp_path / "run.cfg"
    cfg.write_text("map = identity\nr0 = 0.25\n")
    assert main(["verify", "--config", str(cfg), "--out-dir", str(out)]) == 0
    assert json.loads((out / "report-smooth.json").read_text())["config"]["verify"] == "full"
    capsys.readouterr()


def test_svg_frame_and_counts():
    empty = render_svg([], bounds=(0, 0, 1, 1))
    assert empty.count("<path") == 0 and 'class="frame"' in empty
    g = build_grid((0, 0, 1, 1), 0.25)  # 2 x 2 squares
    assert render_svg([GridLayer(g)]).count("<path") == 16
    assert render_svg([BadSquares(g, [0, 3]), GridLayer(g)]).count('class="bad"') == 2


def test_identity_image_matches_grid():
    g = build_grid((0, 0, 1, 1), 0.25)
    pq = interpolate_grid(MapSpec.parse("identity").source(), g)
    grid_svg = render_svg([GridLayer(g)], bounds=(0, 0, 1, 1))
    img_svg = render_svg([ImageMesh(g, pq.edge_values, per_edge=True)], bounds=(0, 0, 1, 1))
    paths = lambda s: re.findall(r' d="([^"]+)"', s)  # noqa: E731
    assert paths(grid_svg) == paths(img_svg)
    assert grid_svg == render_svg([GridLayer(g)], bounds=(0, 0, 1, 1))


def test_cli_render_writes_svgs(tmp_path):
    out = tmp_path / "r"
    assert main(["render", "--map", "radial(0.3)", "--r0", "0.125", "--all-good", "--out-dir", str(out)]) == 0
    grid_svg, img_svg = (out / "grid.svg").read_text(), (out / "image.svg").read_text()
    assert grid_svg.count('class="edge"') == img_svg.count('class="image-edge"') == 40 + 16
