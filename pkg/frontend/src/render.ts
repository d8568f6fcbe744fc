import { segmentText } from "./highlight.js";
import type { CardPayload, CardsResponse } from "./types.js";

const RELATION_LABELS: Record<string, string> = {
  compare: "is like …",
  "is-a": "is a …",
  "part-of": "is part of …",
  "used-for": "is used for …",
};

function highlightedFragment(
  text: string,
  ranges: ReadonlyArray<readonly [number, number]>,
): DocumentFragment {
  const fragment = document.createDocumentFragment();
  for (const segment of segmentText(text, ranges)) {
    if (segment.highlighted) {
      const mark = document.createElement("mark");
      mark.textContent = segment.text;
      fragment.appendChild(mark);
    } else {
      fragment.appendChild(document.createTextNode(segment.text));
    }
  }
  return fragment;
}

export function renderSuggestions(
  list: HTMLElement,
  concepts: string[],
  onSelect: (concept: string) => void,
): void {
  list.replaceChildren();
  if (concepts.length === 0) {
    const empty = document.createElement("li");
    empty.className = "empty";
    empty.textContent = "no concepts found";
    list.appendChild(empty);
    return;
  }
  for (const concept of concepts) {
    const item = document.createElement("li");
    const button = document.createElement("button");
    button.type = "button";
    button.textContent = concept;
    button.addEventListener("click", () => onSelect(concept));
    item.appendChild(button);
    list.appendChild(item);
  }
}

export function renderCard(card: CardPayload): HTMLElement {
  const root = document.createElement("article");
  root.className = "card";

  const header = document.createElement("header");
  const reference = document.createElement("span");
  reference.className = "card-reference";
  reference.textContent = card.reference;
  header.appendChild(reference);
  root.appendChild(header);

  const description = document.createElement("p");
  description.className = "card-description";
  description.appendChild(
    highlightedFragment(card.text, card.highlights.description),
  );
  root.appendChild(description);

  const detail = document.createElement("div");
  detail.className = "card-detail";
  detail.hidden = true;

  const context = document.createElement("blockquote");
  context.className = "card-context";
  context.appendChild(highlightedFragment(card.context, card.highlights.context));
  detail.appendChild(context);

  const source = document.createElement("p");
  source.className = "card-source";
  if (card.paper_url) {
    const link = document.createElement("a");
    link.href = card.paper_url;
    link.target = "_blank";
    link.rel = "noopener";
    link.textContent = card.paper_title || card.paper_url;
    source.appendChild(link);
  } else {
    source.textContent = card.paper_title;
  }
  detail.appendChild(source);
  root.appendChild(detail);

  header.addEventListener("click", () => {
    const expanded = root.classList.toggle("expanded");
    detail.hidden = !expanded;
  });
  return root;
}

export function renderCards(container: HTMLElement, payload: CardsResponse): void {
  container.replaceChildren();
  const heading = document.createElement("h2");
  heading.textContent = payload.target;
  container.appendChild(heading);
  for (const group of payload.groups) {
    const section = document.createElement("section");
    section.className = "relation-group";
    section.dataset.relation = group.relation;
    const title = document.createElement("h3");
    title.textContent = `${payload.target} ${RELATION_LABELS[group.relation] ?? group.relation}`;
    section.appendChild(title);
    const grid = document.createElement("div");
    grid.className = "card-grid";
    for (const card of group.cards) {
      grid.appendChild(renderCard(card));
    }
    section.appendChild(grid);
    container.appendChild(section);
  }
}

export function renderError(banner: HTMLElement, message: string | null): void {
  if (message === null) {
    banner.hidden = true;
    banner.textContent = "";
  } else {
    banner.hidden = false;
    banner.textContent = message;
  }
}
