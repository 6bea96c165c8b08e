"""Neuro-symbolic interpretation of low-level process event streams.

An incremental abstract-argumentation reasoner over domain knowledge is
combined with a trained neural sequence tagger: the tagger proposes likely
activities for each incoming event, the reasoner filters them down to the
readings that remain consistent with the type-level mapping and the
declarative process model, and analysts can query or ask for explanations at
any point of a running trace.
"""

__version__ = "0.1.0"
