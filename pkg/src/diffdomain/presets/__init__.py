"""Shipped experiment configurations."""
