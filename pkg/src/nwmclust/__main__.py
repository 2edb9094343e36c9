"""Allow ``python -m nwmclust``."""

from nwmclust.cli import run

run()
