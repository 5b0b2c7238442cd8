"""Renderers package - CSV, JSON and Markdown output."""
