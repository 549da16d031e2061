"""The bdrylib logging module."""

import logging

logger = logging.getLogger("bdrylib")
logging.basicConfig()
