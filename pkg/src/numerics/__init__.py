"""Interval arithmetic and validated ODE enclosures"""