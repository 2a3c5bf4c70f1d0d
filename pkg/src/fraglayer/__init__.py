"""Detection and merging of fragmented layers in UI design drafts."""

__version__ = "0.1.0"
