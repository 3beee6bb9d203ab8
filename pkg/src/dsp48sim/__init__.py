"""Cycle-accurate DSP48E2 slice model and the systolic matrix engines built from it."""
