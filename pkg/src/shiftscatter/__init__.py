"""Frequency-shifted analog backscatter sensing, simulated end to end.

Tags are LC oscillators whose resonance moves with sensor state (shorted
inductors, touched capacitor teeth, a microphone-driven varactor). Each tag
occupies a unique offset from a shared carrier; the channel stacks their
subcarriers into complex-baseband IQ, and the receiver chain filters,
translates, FM-discriminates and decodes the interactions back out.
"""

__version__ = "0.1.0"
