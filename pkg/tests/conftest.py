"""Shared pytest configuration.

Hypothesis runs derandomized so the suite is reproducible in CI; the
deadline is disabled because a few properties drive full Newton solves.
"""

from hypothesis import settings

settings.register_profile("suite", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("suite")
