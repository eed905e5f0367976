"""Multi-view human and scene reconstruction on synthetic toy scenes."""

__version__ = "0.1.0"
