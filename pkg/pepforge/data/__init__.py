# pepforge data: complex filtering, pocket detection and example documents
