#ifndef UTILS_H
#define UTILS_H

#include <stddef.h>

#define COPY_CAP 16

size_t checksum(const char *);
int is_printable(const char *);
void safe_copy(const char *, size_t);
const char *copied(void);
size_t copied_size(void);
void reset_copy(void);

#endif
