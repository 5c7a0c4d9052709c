"""Self-managing control plane for a simulated microservice mesh.

Monitor -> Analyze -> Plan -> Execute over a shared append-only knowledge
journal, with risk-gated remediation: low and medium risk actions run
autonomously, high-risk actions wait in a human approval queue governed by
the autonomic threshold alpha.
"""

__version__ = "0.1.0"
