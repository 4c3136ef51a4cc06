# pepforge utils: geometry, file formats, configuration and validation
