"""WAY-EEG-GAL to cmcgrasp dataset converter."""

__version__ = "0.1.0"

from .convert import ConversionError, convert
