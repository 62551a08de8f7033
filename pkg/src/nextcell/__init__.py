"""Next-cell prediction from channel-state traces with kernel SVMs."""

__version__ = "0.1.0"
