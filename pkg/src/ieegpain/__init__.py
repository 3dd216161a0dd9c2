"""Pain-state classification from intracranial EEG."""

__version__ = "0.1.0"
