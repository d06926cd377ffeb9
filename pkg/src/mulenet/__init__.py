"""Disaster messaging over disconnected network islands.

Subpackages and modules:

- ``msgcore``: message identity, priorities, sensitivity tiers, flow labels
- ``dtnproto``: role-based store-and-forward protocol and bundling
- ``secstream``: synchronized dynamic keys, tiered protection, stream filter
- ``simkit``: deterministic discrete-event simulator plus delivery oracle
- ``eventflow``: triggers, event rules, and alert dissemination
- ``cli``: scenario validation, batch runs, reports
"""

__version__ = "0.1.0"
