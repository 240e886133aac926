"""CLI scenarios shared by the CLI tests and the determinism criterion."""

SIGMA_SCAN_CFG = """\
domain.mu = 2.0
cloud.resolution = 1000
scenario.axis = sigma
scenario.mode = full
scenario.p_grid = 1.5, 2.0, 4.0
scenario.sigma_grid = 1e-3, 1e2
"""


def scenarios(cfg_path):
    """``(name, argv, expected exit code)``; ``cfg_path`` holds ``SIGMA_SCAN_CFG``."""
    small = ["--mu", "2.0", "--resolution", "1000"]
    return [
        ("exponents", ["exponents", "--mu", "2.0"], 0),
        ("kernel_green", ["kernel", "--mu", "2.0", "--x", "0.5,0.1,0", "--y", "0.2,-0.3,0.1"], 0),
        ("kernel_nalpha", ["kernel", "--mu", "2.0", "--variant", "n_alpha", "--alpha", "2", "--x", "0.5,0.1,0", "--y", "0.2,-0.3,0.1"], 0),
        ("check_quasimetric", ["check", "quasimetric", "--mu", "2.0", "--samples", "2000"], 0),
        ("check_volumes", ["check", "volumes", "--mu", "2.0"], 0),
        ("check_doubling", ["check", "doubling", "--mu", "2.0", "--samples", "50"], 0),
        ("check_condition24", ["check", "condition24", "--mu", "2.0", "--samples", "5"], 0),
        ("check_expansions", ["check", "expansions", "--mu", "2.0", "--samples", "200"], 0),
        ("capacity", ["capacity", "--mu", "2.0", "--set", "cap:-1,0,0:0.125"], 0),
        ("solve_source", ["solve", "source", *small, "--sigma", "1e-3"], 0),
        ("solve_source_p4", ["solve", "source", *small, "--p", "4", "--sigma", "1e-6"], 2),
        ("solve_absorption", ["solve", "absorption", *small], 0),
        ("solve_threshold", ["solve", "threshold", *small], 0),
        ("barrier_build", ["barrier", "build", "--mu", "2.0", "--samples", "2000"], 0),
        ("barrier_verify", ["barrier", "verify", "--mu", "2.0", "--samples", "2000"], 0),
        ("scan_mu", ["scan", "--axis", "mu"], 0),
        ("scan_sigma", ["scan", "--config", str(cfg_path)], 0),
    ]
