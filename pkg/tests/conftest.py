def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: desk-scale statistical checks (minutes, run by default)")


def criterion_line(cid, ok, detail):
    """One pass/fail line per acceptance criterion, printed before asserting."""
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {cid}: {status} - {detail}")
    return ok
