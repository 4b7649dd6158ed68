"""Collaborative asynchronous actor-critic with deep knowledge distillation."""
