"""Attack-defense duel on trigger-action IoT attack graphs.

Simulates an injection attacker and a blocking defender on a DAG of event
conditions, and trains both sides with recurrent Q-networks built on a small
NumPy/Cython neural kernel.
"""

__version__ = "0.1.0"
