"""Concept description-set pipeline: extract contexts that describe a
target concept in terms of a reference concept, generate succinct
relational descriptions, select a diverse stratified set per concept, and
serve the results over HTTP."""

__version__ = "0.1.0"
