#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "utils.h"

#define INPUT_MAX 4096

enum mode {
    MODE_COPY,
    MODE_CHECKSUM,
    MODE_CHECK,
};

static const char *usage_text =
    "usage: safecopy [--checksum | --check] [TEXT]\n"
    "\n"
    "Reads TEXT, or one line of standard input when TEXT is absent,\n"
    "and prints the stored copy.\n"
    "\n"
    "  --checksum   print the checksum of TEXT instead\n"
    "  --check      exit 1 unless TEXT is printable ASCII\n"
    "  --help       show this message\n";

static void usage(FILE *out)
{
    fputs(usage_text, out);
}

static int read_line(char *buf, size_t cap)
{
    size_t n;

    if (!fgets(buf, (int)cap, stdin))
        return -1;
    n = strcspn(buf, "\r\n");
    buf[n] = '\0';
    return 0;
}

static int parse_mode(const char *arg, enum mode *mode)
{
    if (strcmp(arg, "--checksum") == 0) {
        *mode = MODE_CHECKSUM;
        return 1;
    }
    if (strcmp(arg, "--check") == 0) {
        *mode = MODE_CHECK;
        return 1;
    }
    return 0;
}

static int load_input(int argc, char **argv, int first, char *buf, size_t cap)
{
    if (first < argc) {
        if (strlen(argv[first]) >= cap) {
            fprintf(stderr, "safecopy: input too long\n");
            return -1;
        }
        strcpy(buf, argv[first]);
        return 0;
    }
    if (read_line(buf, cap) != 0) {
        fprintf(stderr, "safecopy: no input\n");
        return -1;
    }
    return 0;
}

int main(int argc, char **argv)
{
    static char buf[INPUT_MAX];
    enum mode mode = MODE_COPY;
    size_t user_input_size;
    int first = 1;

    if (argc > 1 && strcmp(argv[1], "--help") == 0) {
        usage(stdout);
        return 0;
    }
    if (argc > 1 && parse_mode(argv[1], &mode))
        first = 2;
    if (load_input(argc, argv, first, buf, sizeof buf) != 0)
        return 2;

    switch (mode) {
    case MODE_CHECKSUM:
        printf("%zu\n", checksum(buf));
        return 0;
    case MODE_CHECK:
        return is_printable(buf) ? 0 : 1;
    case MODE_COPY:
        break;
    }

    if (!is_printable(buf))
        fprintf(stderr, "safecopy: input has non-printable bytes\n");
    user_input_size = strlen(buf);
    if (user_input_size == 0)
        return 0;
    safe_copy(buf, user_input_size);
    printf("%s\n", copied());
    printf("stored %zu bytes\n", copied_size());
    reset_copy();
    return 0;
}
