"""Diachronic lemma+POS frequency analysis for time-sliced scientific abstracts."""

from lexishift.counts import CountTable, LemmaPosKey, SliceTotals
from lexishift.ingest import CorpusManifest, Document
from lexishift.tagging import TaggedDocument, Token
from lexishift.trends import TrendRecord

__all__ = [
    "CorpusManifest",
    "CountTable",
    "Document",
    "LemmaPosKey",
    "SliceTotals",
    "TaggedDocument",
    "Token",
    "TrendRecord",
]

__version__ = "0.1.0"
