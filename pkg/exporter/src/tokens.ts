/**
 * Token files are the hand-off from the preprocessing stage: one post per
 * line, the post id, a tab, then space-separated normalized tokens.  Posts
 * whose text normalized away entirely carry the single placeholder token
 * `<empty>`.
 */

export interface PostTokens {
  id: string;
  tokens: string[];
}

export class TokenFileError extends Error {}

export function parseTokenFile(text: string): PostTokens[] {
  const posts: PostTokens[] = [];
  const seen = new Set<string>();
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i];
    if (line === "") continue;
    const tab = line.indexOf("\t");
    if (tab <= 0) {
      throw new TokenFileError(`line ${i + 1}: expected "<id>\\t<token token ...>"`);
    }
    const id = line.slice(0, tab);
    if (seen.has(id)) {
      throw new TokenFileError(`line ${i + 1}: duplicate post id ${id}`);
    }
    seen.add(id);
    const tokens = line.slice(tab + 1).split(" ");
    if (tokens.some((t) => t === "")) {
      throw new TokenFileError(`line ${i + 1}: post ${id} has empty or misspaced tokens`);
    }
    posts.push({ id, tokens });
  }
  return posts;
}
