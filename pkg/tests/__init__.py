"""tidalfarm test suite; shared fixtures live in tests.helpers."""
