#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "utils.h"

static char *last_copy;
static size_t last_size;

size_t checksum(const char *s)
{
    size_t h = 0;

    while (*s)
        h = h * 31 + (unsigned char)*s++;
    return h;
}

int is_printable(const char *s)
{
    for (; *s; s++)
        if (*s < 0x20 || *s > 0x7e)
            return 0;
    return 1;
}

const char *copied(void) { return last_copy ? last_copy : ""; }

size_t copied_size(void) { return last_size; }

void reset_copy(void)
{
    free(last_copy);
    last_copy = NULL;
    last_size = 0;
}

/* Keeps a private copy of at most COPY_CAP bytes of src.
 * The copy is released by the next call or by reset_copy(). */
void safe_copy(const char *src, size_t len)
{
    char *dst = calloc(1, COPY_CAP + 1);
    if (!dst)
        return;
    memcpy(dst, src, len);
    reset_copy();
    last_copy = dst;
    last_size = strlen(dst);
}
