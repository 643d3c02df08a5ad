import csv
import os

import numpy as np
import pytest

from rtspect.cli import main, parse_config, run
from rtspect.errors import ConfigError

MINIMAL = """
[profile]
kind = bump
rho_minus = 1.0
rho_plus = 3.0
a = 1.0

[physical]
g = 1.0
mu = 1.0
k = 1.0
"""

SMALL_NUMERICS = """
[numerical]
n_elements = 64
n_modes = 3
"""


def test_parse_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.k_values == [1.0]
    assert cfg.opts.n_elements == 256
    assert cfg.opts.tol == 1e-8
    assert cfg.opts.n_modes == 8
    assert cfg.opts.eps_star is None  # resolved to 0.01*sqrt(g/L0) downstream


def test_parse_rejects_negative_mu():
    with pytest.raises(ConfigError, match="physical.mu|mu"):
        parse_config(MINIMAL.replace("mu = 1.0", "mu = -1.0"))


def test_parse_rejects_unknown_key():
    bad = MINIMAL + "\n[numerical]\nn_elements = 64\nfoo = 1\n"
    with pytest.raises(ConfigError, match=r"foo.*numerical|numerical.*foo"):
        parse_config(bad)


def test_parse_missing_section_names_schema():
    with pytest.raises(ConfigError, match=r"\[physical\]"):
        parse_config("[profile]\nkind = tanh\nrho_minus = 1\nrho_plus = 2\nell = 1\n")


def test_parse_k_range():
    cfg = parse_config(MINIMAL.replace(
        "k = 1.0", "k_min = 1.0\nk_max = 4.0\nk_count = 4"))
    assert cfg.k_values == pytest.approx([1.0, 2.0, 3.0, 4.0])


def test_parse_tabulated_csv(tmp_path):
    path = tmp_path / "prof.csv"
    xs = np.linspace(-2, 2, 21)
    with open(path, "w") as fh:
        for x, r in zip(xs, 2 + np.tanh(xs)):
            fh.write(f"{x},{r}\n")
    text = MINIMAL.replace("kind = bump", "kind = tabulated").replace(
        "a = 1.0", f"csv = {path}")
    cfg = parse_config(text)
    assert cfg.profile.family == "tabulated"


def test_invalid_command_exit_2(tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text(MINIMAL)
    assert main(["frobnicate", "--config", str(cfgfile)]) == 2


def test_missing_config_exit_2():
    assert main(["dispersion", "--config", "/nonexistent/path.ini"]) == 2


@pytest.fixture(scope="module")
def disp_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("out")
    cfgfile = out / "c.ini"
    cfgfile.write_text(MINIMAL + SMALL_NUMERICS)
    code = main(["dispersion", "--config", str(cfgfile), "--out", str(out)])
    assert code == 0
    return out


def test_dispersion_rows(disp_out):
    with open(disp_out / "dispersion.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "n", "lambda_n", "residual", "coercivity_margin",
                       "N_eps_star"]
    assert len(rows) == 4  # header + 3 modes
    lams = [float(r[2]) for r in rows[1:]]
    assert lams == sorted(lams, reverse=True)


def test_dispersion_deterministic(disp_out, tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text(MINIMAL + SMALL_NUMERICS)
    assert main(["dispersion", "--config", str(cfgfile),
                 "--out", str(tmp_path)]) == 0
    a = (disp_out / "dispersion.csv").read_bytes()
    b = (tmp_path / "dispersion.csv").read_bytes()
    assert a == b


def test_modes_dump(tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text(MINIMAL + "\n[numerical]\nn_elements = 64\nn_modes = 2\n")
    assert main(["modes", "--config", str(cfgfile), "--out", str(tmp_path)]) == 0
    with open(tmp_path / "mode_1.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "phi", "dphi", "d2phi", "d3phi", "zeta", "psi",
                       "theta", "q"]
    phi = np.array([float(r[1]) for r in rows[1:]])
    assert np.max(np.abs(phi)) == pytest.approx(1.0, abs=1e-2)


def test_oracle_dump(tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text(MINIMAL + SMALL_NUMERICS)
    assert main(["oracle", "--config", str(cfgfile), "--out", str(tmp_path)]) == 0
    with open(tmp_path / "oracle.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["lambda", "sign", "log_magnitude"]
    signs = [float(r[1]) for r in rows[1:]]
    assert set(signs) <= {-1.0, 1.0}
    assert len(rows) == 66


def test_threaded_k_grid_and_matrix_dump(tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text(MINIMAL.replace(
        "k = 1.0", "k_min = 1.0\nk_max = 2.0\nk_count = 2")
        + "\n[numerical]\nn_elements = 48\nn_modes = 2\n")
    code = main(["dispersion", "--config", str(cfgfile), "--out",
                 str(tmp_path), "--threads", "2", "--dump-matrices"])
    assert code == 0
    with open(tmp_path / "dispersion.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 5  # header + 2 k's x 2 modes
    dump = (tmp_path / "forms_k1.txt").read_text().splitlines()
    assert dump[0].startswith("# lambda")
    name, i, j, val = dump[1].split()
    assert name in {"K", "M_rho", "G"}
    float(val)


def test_verify_exits_zero_on_bump_fixture(tmp_path):
    # full invariant suite on the compact reference profile
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text(MINIMAL + "\n[numerical]\nn_elements = 192\nn_modes = 3\n")
    assert main(["verify", "--config", str(cfgfile), "--seed", "1"]) == 0


def test_outer_coeffs_dump(tmp_path, tanh_pipe):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text("""
[profile]
kind = tanh
rho_minus = 1.0
rho_plus = 3.0
ell = 1.0

[physical]
g = 1.0
mu = 1.0
k = 1.0

[numerical]
n_elements = 64
""")
    assert main(["outer-coeffs", "--config", str(cfgfile),
                 "--out", str(tmp_path)]) == 0
    with open(tmp_path / "outer_coeffs.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["end", "x_end", "lambda"]
    ends = {r[0] for r in rows[1:]}
    assert ends == {"left", "right"}
    # discriminants nonpositive at coercive endpoints
    right_far = [r for r in rows[1:] if r[0] == "right"]
    assert all(float(r[-1]) < 0 for r in right_far)
