"""Guardrailed tutoring chatbot for introductory programming tasks,
with an interaction-analysis pipeline for the recorded chat corpora."""

__version__ = "0.1.0"
