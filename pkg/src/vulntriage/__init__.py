"""Vulnerability triage pipeline.

Ingests raw scanner findings, deduplicates them by CVE, validates
against advisory snapshots (NVD, EUVD, CISA KEV), infers missing CVSS
v3.1 vectors with confidence gating, prioritizes by severity threshold,
and emits provenance-tracked remediation recommendations with a human
review loop.
"""

__version__ = "0.1.0"
