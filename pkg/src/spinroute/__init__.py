"""Single-excitation simulation of spin networks used as quantum wires and routers.

Modules
-------
network   graphs of qubit sites, builders and JSON documents
sector    the N-dimensional single-excitation engine, pulses and fidelities
oracle    brute-force 2^N evolution used to cross-check the sector engine
pst       engineered perfect-transfer chains and the pulsed diamond chain
hexchip   layered honeycomb chips of Hadamard switches and their routing
dualrail  conclusive transfer over two disordered chains
cli       the ``spinroute`` command
"""

__version__ = "0.1.0"
