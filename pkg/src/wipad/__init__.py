"""Models and tools for the WiPad covert channel in 802.11a/g OFDM padding."""

__version__ = "0.1.0"
