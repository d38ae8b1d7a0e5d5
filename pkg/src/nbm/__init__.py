"""Neural basis method for coupled Darcy flow and transport."""
