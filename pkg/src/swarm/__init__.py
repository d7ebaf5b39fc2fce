"""Desk-scale asynchronous decentralized RL training fabric.

Subpackages:
    policy        toy autoregressive policy and the clipped policy-gradient math
    tasks         synthetic verifiable tasks, rewards, difficulty filtering
    worker        untrusted rollout generation, commitments, uploads
    validator     audit checks over uploaded rollout files
    broadcast     sharded checkpoint distribution through relay servers
    orchestrator  discovery, invites, heartbeats, task scheduling, ledger
    trainer       step counter, batch assembly, optimizer loop, publishing
    harness       multi-process experiment runner and fault injection
"""

__version__ = "0.1.0"
