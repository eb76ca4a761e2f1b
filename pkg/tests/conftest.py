def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance: full acceptance criteria (Monte Carlo heavy; deselect "
        "with -m 'not acceptance' for a quick run)")
