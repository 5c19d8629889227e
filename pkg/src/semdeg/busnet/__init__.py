"""Plug-and-sense harness: Modbus-TCP data plane plus the I4.0 service overlay."""
