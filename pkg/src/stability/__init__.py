"""Stability encodings and verdicts"""